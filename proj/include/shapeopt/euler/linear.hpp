/// @file linear.hpp
/// @brief Sparse direct solve: UMFPACK when the build found it, Eigen's
/// SparseLU otherwise. The symbolic analysis is kept while the pattern holds.
#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#ifdef SHAPEOPT_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include "shapeopt/core.hpp"

namespace shapeopt::euler {

using SparseMatrix = Eigen::SparseMatrix<double>;

class SparseDirectSolver {
 public:
  /// Factorize A. Reuses the previous symbolic analysis when the nonzero
  /// count and size are unchanged.
  void factorize(const SparseMatrix& a) {
    if (!(a.rows() == rows_ && a.nonZeros() == nnz_)) {
      lu_.analyzePattern(a);
      rows_ = a.rows();
      nnz_ = a.nonZeros();
    }
    lu_.factorize(a);
    if (lu_.info() != Eigen::Success) throw SolverError("sparse factorization failed");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = lu_.solve(b);
    if (lu_.info() != Eigen::Success || !x.allFinite()) throw SolverError("sparse solve failed");
    return x;
  }

 private:
#ifdef SHAPEOPT_HAVE_UMFPACK
  Eigen::UmfPackLU<SparseMatrix> lu_;
#else
  Eigen::SparseLU<SparseMatrix> lu_;
#endif
  Eigen::Index rows_ = -1;
  Eigen::Index nnz_ = -1;
};

}  // namespace shapeopt::euler
