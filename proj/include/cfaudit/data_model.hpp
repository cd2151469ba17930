#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cfaudit {

/// Names the columns of an audit table and how to read the score.
struct ColumnSpec {
  std::vector<std::string> protected_columns;
  std::string treatment_column = "d";
  std::string outcome_column = "y";
  std::vector<std::string> covariate_columns;
  std::string score_column = "s";
  double score_threshold = 0.5;

  /// Throws ConfigError when names collide, no protected column is given,
  /// or the threshold is outside (0, 1).
  void validate() const;
};

/// Raw level labels of one protected characteristic; codes are indices into `labels`.
struct LevelMap {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> codes;

  /// Code for `label`, assigning the next code on first appearance.
  int intern(const std::string& label);
  /// Code for `label` or -1.
  int find(const std::string& label) const;
  std::size_t size() const { return labels.size(); }

  bool operator==(const LevelMap& other) const { return labels == other.labels; }
};

/// Immutable audit table. Protected codes are stored row-major (n x m).
class Dataset {
 public:
  Dataset() = default;
  Dataset(ColumnSpec spec, std::vector<LevelMap> level_maps, std::vector<int> protected_codes,
          std::vector<std::uint8_t> treatment, std::vector<std::uint8_t> outcome,
          Eigen::MatrixXd covariates, std::vector<std::uint8_t> score, std::size_t rejected_rows = 0);

  std::size_t size() const { return treatment_.size(); }
  std::size_t protected_count() const { return level_maps_.size(); }
  std::size_t covariate_count() const { return static_cast<std::size_t>(covariates_.cols()); }

  const ColumnSpec& spec() const { return spec_; }
  const std::vector<LevelMap>& level_maps() const { return level_maps_; }
  int protected_code(std::size_t row, std::size_t characteristic) const {
    return protected_codes_[row * protected_count() + characteristic];
  }
  std::span<const int> protected_row(std::size_t row) const {
    return {protected_codes_.data() + row * protected_count(), protected_count()};
  }
  const std::vector<int>& protected_codes() const { return protected_codes_; }
  const std::vector<std::uint8_t>& treatment() const { return treatment_; }
  const std::vector<std::uint8_t>& outcome() const { return outcome_; }
  const std::vector<std::uint8_t>& score() const { return score_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  /// Rows dropped at ingestion because a required field was empty.
  std::size_t rejected_rows() const { return rejected_rows_; }

  /// Rows `rows` (repeats allowed) in the given order; level maps are kept.
  Dataset subset(std::span<const std::size_t> rows) const;
  /// Row i receives the whole protected vector of row source[i]; everything else stays put.
  Dataset with_protected_from(std::span<const std::size_t> source) const;
  /// Copy with a different score vector (used when a risk model scores generated data).
  Dataset with_score(std::vector<std::uint8_t> score) const;

  bool operator==(const Dataset& other) const;

 private:
  ColumnSpec spec_;
  std::vector<LevelMap> level_maps_;
  std::vector<int> protected_codes_;
  std::vector<std::uint8_t> treatment_;
  std::vector<std::uint8_t> outcome_;
  Eigen::MatrixXd covariates_;
  std::vector<std::uint8_t> score_;
  std::size_t rejected_rows_ = 0;
};

/// Builds a Dataset row by row from raw protected labels, assigning level codes on first appearance.
class DatasetBuilder {
 public:
  explicit DatasetBuilder(ColumnSpec spec);

  void reserve(std::size_t n);
  void add_row(std::span<const std::string> protected_labels, bool treatment, bool outcome,
               std::span<const double> covariates, bool score);
  void add_rejected(std::size_t count = 1) { rejected_ += count; }
  std::size_t size() const { return treatment_.size(); }
  Dataset build() &&;

 private:
  ColumnSpec spec_;
  std::vector<LevelMap> level_maps_;
  std::vector<int> codes_;
  std::vector<std::uint8_t> treatment_, outcome_, score_;
  std::vector<double> covariates_;  // row-major while building
  std::size_t rejected_ = 0;
};

/// Returns 1 iff p >= threshold. Throws DataError("domain") unless 0 <= p <= 1.
bool binarize_score(double p, double threshold);

/// Reads comma-delimited text with a header row.
Dataset load_dataset(std::istream& source, const ColumnSpec& spec);
Dataset load_dataset_file(const std::string& path, const ColumnSpec& spec);
/// Writes the columns named in the dataset's spec; load_dataset on the output reproduces it.
void write_dataset(std::ostream& sink, const Dataset& ds);

/// One element of the cross-product of protected levels.
struct GroupKey {
  std::vector<int> levels;
  auto operator<=>(const GroupKey&) const = default;
  bool operator==(const GroupKey&) const = default;
};

/// Assignment of records to a finite set of groups.
struct Grouping {
  std::size_t group_count = 0;
  std::vector<int> group_of_row;
};

/// All intersectional groups (including empty ones) and their unordered pairs.
struct GroupIndex {
  std::vector<GroupKey> groups;        // lexicographic by (characteristic, code)
  std::vector<std::size_t> counts;     // members per group; 0 flags an absent intersection
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (i, j), i < j, lexicographic
  Grouping membership;

  std::size_t size() const { return groups.size(); }
  /// Index of the group with these raw labels, or size() when absent.
  std::size_t find_labels(const Dataset& ds, std::span<const std::string> labels) const;
  std::string label(const Dataset& ds, std::size_t group) const;
  std::vector<std::string> labels(const Dataset& ds, std::size_t group) const;
};

GroupIndex enumerate_groups(const Dataset& ds);
/// Grouping by the levels of a single characteristic, pooling over all others.
Grouping marginal_grouping(const Dataset& ds, std::size_t characteristic);

}  // namespace cfaudit
