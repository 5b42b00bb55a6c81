/// @file io.hpp
/// @brief Solution file (one `rho rhoux rhouy E` line per cell, mesh
/// triangle order) and Newton convergence history CSV.
#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "shapeopt/euler/solver.hpp"

namespace shapeopt::euler {

inline void write_solution(std::ostream& os, const FlowField& f) {
  for (std::size_t i = 0; i < f.num_cells(); ++i) {
    const State s = f.cell(i);
    os << format_double(s[0]) << ' ' << format_double(s[1]) << ' ' << format_double(s[2]) << ' ' << format_double(s[3])
       << '\n';
  }
}

inline FlowField read_solution(std::istream& is) {
  std::vector<double> vals;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    int n = 0;
    while (ls >> tok) {
      vals.push_back(parse_double(tok));
      ++n;
    }
    if (n != 4) throw IoError("solution file: expected 4 values per line");
  }
  FlowField f;
  f.u = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return f;
}

inline void save_solution(const std::string& path, const FlowField& f) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_solution(os, f);
}

inline FlowField load_solution(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return read_solution(is);
}

inline void write_history(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "iter,residual_norm,cfl\n";
  for (const auto& r : rows) os << r.iter << ',' << format_double(r.residual_norm) << ',' << format_double(r.cfl) << '\n';
}

}  // namespace shapeopt::euler
