#pragma once

#include <string>
#include <vector>

#include "cfaudit/data_model.hpp"

namespace cfaudit::testing {

struct Row {
  std::string a1, a2;
  int d, y, s;
  std::vector<double> x;
};

inline Dataset make_dataset(const std::vector<Row>& rows, std::size_t covariates = 0) {
  ColumnSpec spec;
  spec.protected_columns = {"a1", "a2"};
  for (std::size_t j = 0; j < covariates; ++j) spec.covariate_columns.push_back("x" + std::to_string(j + 1));
  DatasetBuilder b(spec);
  for (const auto& r : rows) {
    const std::vector<std::string> labels{r.a1, r.a2};
    b.add_row(labels, r.d != 0, r.y != 0, r.x, r.s != 0);
  }
  return std::move(b).build();
}

}  // namespace cfaudit::testing
