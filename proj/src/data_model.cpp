#include "cfaudit/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "cfaudit/error.hpp"

namespace cfaudit {

void ColumnSpec::validate() const {
  if (protected_columns.empty()) throw ConfigError("at least one protected column is required");
  if (!(score_threshold > 0.0 && score_threshold < 1.0))
    throw ConfigError("score_threshold must lie strictly inside (0, 1)");
  std::set<std::string> seen;
  auto check = [&](const std::string& name, const char* role) {
    if (name.empty()) throw ConfigError(std::string(role) + " column name is empty");
    if (!seen.insert(name).second) throw ConfigError("column '" + name + "' is named more than once");
  };
  for (const auto& c : protected_columns) check(c, "protected");
  check(treatment_column, "treatment");
  check(outcome_column, "outcome");
  for (const auto& c : covariate_columns) check(c, "covariate");
  check(score_column, "score");
}

int LevelMap::intern(const std::string& label) {
  auto [it, inserted] = codes.try_emplace(label, static_cast<int>(labels.size()));
  if (inserted) labels.push_back(label);
  return it->second;
}

int LevelMap::find(const std::string& label) const {
  auto it = codes.find(label);
  return it == codes.end() ? -1 : it->second;
}

Dataset::Dataset(ColumnSpec spec, std::vector<LevelMap> level_maps, std::vector<int> protected_codes,
                 std::vector<std::uint8_t> treatment, std::vector<std::uint8_t> outcome,
                 Eigen::MatrixXd covariates, std::vector<std::uint8_t> score, std::size_t rejected_rows)
    : spec_(std::move(spec)),
      level_maps_(std::move(level_maps)),
      protected_codes_(std::move(protected_codes)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)),
      covariates_(std::move(covariates)),
      score_(std::move(score)),
      rejected_rows_(rejected_rows) {
  const std::size_t n = treatment_.size();
  const std::size_t m = level_maps_.size();
  if (m != spec_.protected_columns.size())
    throw DataError("shape", "level map count does not match protected columns");
  if (outcome_.size() != n || score_.size() != n || protected_codes_.size() != n * m ||
      static_cast<std::size_t>(covariates_.rows()) != n ||
      static_cast<std::size_t>(covariates_.cols()) != spec_.covariate_columns.size())
    throw DataError("shape", "dataset columns have inconsistent lengths");
  for (std::size_t i = 0; i < n; ++i) {
    if (treatment_[i] > 1 || outcome_[i] > 1 || score_[i] > 1)
      throw DataError("parse", "treatment, outcome and score must be binary");
    for (std::size_t j = 0; j < m; ++j) {
      const int c = protected_codes_[i * m + j];
      if (c < 0 || static_cast<std::size_t>(c) >= level_maps_[j].size())
        throw DataError("shape", "protected level code out of range");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t m = protected_count();
  std::vector<int> codes(rows.size() * m);
  std::vector<std::uint8_t> d(rows.size()), y(rows.size()), s(rows.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), covariates_.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    std::copy_n(protected_codes_.begin() + static_cast<std::ptrdiff_t>(r * m), m,
                codes.begin() + static_cast<std::ptrdiff_t>(k * m));
    d[k] = treatment_[r];
    y[k] = outcome_[r];
    s[k] = score_[r];
    x.row(static_cast<Eigen::Index>(k)) = covariates_.row(static_cast<Eigen::Index>(r));
  }
  Dataset out;
  out.spec_ = spec_;
  out.level_maps_ = level_maps_;
  out.protected_codes_ = std::move(codes);
  out.treatment_ = std::move(d);
  out.outcome_ = std::move(y);
  out.covariates_ = std::move(x);
  out.score_ = std::move(s);
  return out;
}

Dataset Dataset::with_protected_from(std::span<const std::size_t> source) const {
  if (source.size() != size()) throw DataError("shape", "protected permutation has the wrong length");
  const std::size_t m = protected_count();
  Dataset out = *this;
  for (std::size_t i = 0; i < source.size(); ++i)
    std::copy_n(protected_codes_.begin() + static_cast<std::ptrdiff_t>(source[i] * m), m,
                out.protected_codes_.begin() + static_cast<std::ptrdiff_t>(i * m));
  return out;
}

Dataset Dataset::with_score(std::vector<std::uint8_t> score) const {
  if (score.size() != size()) throw DataError("shape", "score vector has the wrong length");
  Dataset out = *this;
  out.score_ = std::move(score);
  return out;
}

bool Dataset::operator==(const Dataset& other) const {
  return spec_.protected_columns == other.spec_.protected_columns &&
         spec_.covariate_columns == other.spec_.covariate_columns && level_maps_ == other.level_maps_ &&
         protected_codes_ == other.protected_codes_ && treatment_ == other.treatment_ &&
         outcome_ == other.outcome_ && score_ == other.score_ && covariates_ == other.covariates_;
}

DatasetBuilder::DatasetBuilder(ColumnSpec spec) : spec_(std::move(spec)) {
  level_maps_.resize(spec_.protected_columns.size());
}

void DatasetBuilder::reserve(std::size_t n) {
  codes_.reserve(n * level_maps_.size());
  treatment_.reserve(n);
  outcome_.reserve(n);
  score_.reserve(n);
  covariates_.reserve(n * spec_.covariate_columns.size());
}

void DatasetBuilder::add_row(std::span<const std::string> protected_labels, bool treatment, bool outcome,
                             std::span<const double> covariates, bool score) {
  if (protected_labels.size() != level_maps_.size() || covariates.size() != spec_.covariate_columns.size())
    throw DataError("shape", "row width does not match the column spec");
  for (std::size_t j = 0; j < protected_labels.size(); ++j) codes_.push_back(level_maps_[j].intern(protected_labels[j]));
  treatment_.push_back(treatment);
  outcome_.push_back(outcome);
  score_.push_back(score);
  covariates_.insert(covariates_.end(), covariates.begin(), covariates.end());
}

Dataset DatasetBuilder::build() && {
  const auto n = static_cast<Eigen::Index>(treatment_.size());
  const auto p = static_cast<Eigen::Index>(spec_.covariate_columns.size());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = covariates_[static_cast<std::size_t>(i * p + j)];
  return Dataset(std::move(spec_), std::move(level_maps_), std::move(codes_), std::move(treatment_),
                 std::move(outcome_), std::move(x), std::move(score_), rejected_);
}

bool binarize_score(double p, double threshold) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("domain", "score " + std::to_string(p) + " is outside [0, 1]");
  return p >= threshold;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string strip(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_binary(const std::string& token, const std::string& column, std::size_t line) {
  if (token == "0") return false;
  if (token == "1") return true;
  throw DataError("parse", "line " + std::to_string(line) + ": column '" + column + "' holds '" + token +
                               "', expected 0 or 1");
}

double parse_real(const std::string& token, const std::string& column, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw DataError("parse", "line " + std::to_string(line) + ": column '" + column + "' holds non-numeric '" +
                                 token + "'");
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Dataset load_dataset(std::istream& source, const ColumnSpec& spec) {
  spec.validate();
  std::string line;
  if (!std::getline(source, line) || strip(line).empty()) throw DataError("empty_input", "input is empty");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = strip(h);

  auto locate = [&](const std::string& name, const char* role) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw DataError("schema", std::string(role) + " '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> a_col;
  for (const auto& c : spec.protected_columns) a_col.push_back(locate(c, "protected_column"));
  const std::size_t d_col = locate(spec.treatment_column, "treatment_column");
  const std::size_t y_col = locate(spec.outcome_column, "outcome_column");
  std::vector<std::size_t> x_col;
  for (const auto& c : spec.covariate_columns) x_col.push_back(locate(c, "covariate_column"));
  const std::size_t s_col = locate(spec.score_column, "score_column");

  DatasetBuilder builder(spec);
  std::vector<std::string> labels(a_col.size());
  std::vector<double> x(x_col.size());
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("parse", "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                   " fields, found " + std::to_string(fields.size()));
    for (auto& f : fields) f = strip(f);

    bool missing = fields[d_col].empty() || fields[y_col].empty() || fields[s_col].empty();
    for (auto c : a_col) missing = missing || fields[c].empty();
    for (auto c : x_col) missing = missing || fields[c].empty();
    if (missing) {
      builder.add_rejected();
      continue;
    }

    for (std::size_t j = 0; j < a_col.size(); ++j) labels[j] = fields[a_col[j]];
    const bool d = parse_binary(fields[d_col], spec.treatment_column, line_no);
    const bool y = parse_binary(fields[y_col], spec.outcome_column, line_no);
    for (std::size_t j = 0; j < x_col.size(); ++j) x[j] = parse_real(fields[x_col[j]], spec.covariate_columns[j], line_no);
    const double p = parse_real(fields[s_col], spec.score_column, line_no);
    bool s = false;
    try {
      s = binarize_score(p, spec.score_threshold);
    } catch (const DataError& e) {
      throw DataError("parse", "line " + std::to_string(line_no) + ": " + e.what());
    }
    builder.add_row(labels, d, y, x, s);
  }
  if (builder.size() == 0) throw DataError("empty_input", "input has no usable records");
  return std::move(builder).build();
}

Dataset load_dataset_file(const std::string& path, const ColumnSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("io", "cannot open '" + path + "'");
  return load_dataset(in, spec);
}

void write_dataset(std::ostream& sink, const Dataset& ds) {
  const ColumnSpec& spec = ds.spec();
  std::vector<std::string> header;
  for (const auto& c : spec.protected_columns) header.push_back(c);
  header.push_back(spec.treatment_column);
  header.push_back(spec.outcome_column);
  for (const auto& c : spec.covariate_columns) header.push_back(c);
  header.push_back(spec.score_column);
  for (std::size_t k = 0; k < header.size(); ++k) sink << (k ? "," : "") << quote_if_needed(header[k]);
  sink << '\n';

  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.protected_count(); ++j)
      sink << quote_if_needed(ds.level_maps()[j].labels[static_cast<std::size_t>(ds.protected_code(i, j))]) << ',';
    sink << int(ds.treatment()[i]) << ',' << int(ds.outcome()[i]);
    for (Eigen::Index j = 0; j < ds.covariates().cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.covariates()(static_cast<Eigen::Index>(i), j));
      sink << ',' << buf;
    }
    sink << ',' << int(ds.score()[i]) << '\n';
  }
}

GroupIndex enumerate_groups(const Dataset& ds) {
  GroupIndex gi;
  const std::size_t m = ds.protected_count();
  std::vector<std::size_t> radix(m);
  for (std::size_t j = 0; j < m; ++j) radix[j] = ds.level_maps()[j].size();

  // Mixed-radix enumeration with the first characteristic most significant.
  std::size_t total = 1;
  for (auto r : radix) total *= r;
  gi.groups.reserve(total);
  std::vector<int> levels(m, 0);
  for (std::size_t g = 0; g < total; ++g) {
    std::size_t rem = g;
    for (std::size_t j = m; j-- > 0;) {
      levels[j] = static_cast<int>(rem % radix[j]);
      rem /= radix[j];
    }
    gi.groups.push_back(GroupKey{levels});
  }

  gi.counts.assign(total, 0);
  gi.membership.group_count = total;
  gi.membership.group_of_row.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t g = 0;
    for (std::size_t j = 0; j < m; ++j) g = g * radix[j] + static_cast<std::size_t>(ds.protected_code(i, j));
    gi.membership.group_of_row[i] = static_cast<int>(g);
    ++gi.counts[g];
  }

  gi.pairs.reserve(total * (total - 1) / 2);
  for (std::size_t a = 0; a < total; ++a)
    for (std::size_t b = a + 1; b < total; ++b) gi.pairs.emplace_back(a, b);
  return gi;
}

Grouping marginal_grouping(const Dataset& ds, std::size_t characteristic) {
  Grouping g;
  g.group_count = ds.level_maps().at(characteristic).size();
  g.group_of_row.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) g.group_of_row[i] = ds.protected_code(i, characteristic);
  return g;
}

std::size_t GroupIndex::find_labels(const Dataset& ds, std::span<const std::string> labels) const {
  if (labels.size() != ds.protected_count()) return size();
  GroupKey key;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int c = ds.level_maps()[j].find(labels[j]);
    if (c < 0) return size();
    key.levels.push_back(c);
  }
  auto it = std::lower_bound(groups.begin(), groups.end(), key);
  return (it != groups.end() && *it == key) ? static_cast<std::size_t>(it - groups.begin()) : size();
}

std::vector<std::string> GroupIndex::labels(const Dataset& ds, std::size_t group) const {
  std::vector<std::string> out;
  const auto& key = groups.at(group);
  for (std::size_t j = 0; j < key.levels.size(); ++j)
    out.push_back(ds.level_maps()[j].labels[static_cast<std::size_t>(key.levels[j])]);
  return out;
}

std::string GroupIndex::label(const Dataset& ds, std::size_t group) const {
  std::string out;
  const auto parts = labels(ds, group);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    if (j) out += '|';
    out += ds.spec().protected_columns[j] + '=' + parts[j];
  }
  return out;
}

}  // namespace cfaudit
