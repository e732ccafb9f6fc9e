#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "attcal/errors.hpp"

namespace attcal {

// Row provenance for composite observational analyses.
enum class RowTag : int { none = 0, exp_treat = 1, exp_control = 2, comparison = 3 };

// One analysis sample: outcome y, binary treatment t, covariate matrix X.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXi t;
  Eigen::MatrixXd X;
  std::vector<std::string> names;  // one per X column
  std::vector<RowTag> tags;        // empty, or one per row

  int n() const { return static_cast<int>(y.size()); }

  int n1() const {
    int c = 0;
    for (int i = 0; i < t.size(); ++i) c += t[i];
    return c;
  }

  int n0() const { return n() - n1(); }

  double treated_fraction() const { return n() == 0 ? 0.0 : static_cast<double>(n1()) / n(); }

  void validate() const {
    const int m = n();
    if (t.size() != m) throw ValidationError("dataset: treatment length != outcome length");
    if (X.rows() != m) throw ValidationError("dataset: covariate rows != outcome length");
    if (!names.empty() && static_cast<int>(names.size()) != X.cols())
      throw ValidationError("dataset: column-name count != covariate columns");
    if (!tags.empty() && static_cast<int>(tags.size()) != m)
      throw ValidationError("dataset: provenance tag count != row count");
    for (int i = 0; i < m; ++i) {
      if (t[i] != 0 && t[i] != 1)
        throw ValidationError("dataset: treatment must be 0/1 (row " + std::to_string(i) + ")");
      if (!std::isfinite(y[i]))
        throw ValidationError("dataset: non-finite outcome (row " + std::to_string(i) + ")");
    }
    for (int i = 0; i < X.rows(); ++i)
      for (int j = 0; j < X.cols(); ++j)
        if (!std::isfinite(X(i, j)))
          throw ValidationError("dataset: non-finite covariate (row " + std::to_string(i) +
                                ", column " + std::to_string(j) + ")");
  }

  int column_index(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<int>(j);
    throw ValidationError("dataset: no column named '" + name + "'");
  }
};

}  // namespace attcal
