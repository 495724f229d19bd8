#include "dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "csv.hpp"
#include "error.hpp"

namespace tripdiff {

int Cohort::period() const {
  if (!period_) throw UsageError("cohort is never-treated and has no period");
  return *period_;
}

const char* to_string(Comparison c) {
  return c == Comparison::Never ? "never" : "notyet";
}

const char* to_string(Estimand e) {
  switch (e) {
    case Estimand::DATT: return "datt";
    case Estimand::CDATT: return "cdatt";
    case Estimand::ATTUnaffected: return "att_unaffected";
    case Estimand::Bound: return "bound";
  }
  return "?";
}

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::Unadjusted: return "unadjusted";
    case Estimator::ThreeWFE: return "3wfe";
    case Estimator::RA: return "ra";
    case Estimator::IPW: return "ipw";
    case Estimator::DR: return "dr";
  }
  return "?";
}

Comparison parse_comparison(const std::string& text) {
  if (text == "never" || text == "nev") return Comparison::Never;
  if (text == "notyet" || text == "ny" || text == "not-yet") return Comparison::NotYet;
  throw UsageError("unknown comparison group '" + text + "' (expected never|notyet)");
}

Estimand parse_estimand(const std::string& text) {
  if (text == "datt") return Estimand::DATT;
  if (text == "cdatt") return Estimand::CDATT;
  if (text == "att_unaffected" || text == "att") return Estimand::ATTUnaffected;
  if (text == "bound") return Estimand::Bound;
  throw UsageError("unknown estimand '" + text + "' (expected datt|cdatt|att_unaffected|bound)");
}

Estimator parse_estimator(const std::string& text) {
  if (text == "unadjusted" || text == "none") return Estimator::Unadjusted;
  if (text == "3wfe" || text == "threewfe") return Estimator::ThreeWFE;
  if (text == "ra") return Estimator::RA;
  if (text == "ipw") return Estimator::IPW;
  if (text == "dr") return Estimator::DR;
  throw UsageError("unknown estimator '" + text + "' (expected unadjusted|3wfe|ra|ipw|dr)");
}

const char* describe(Cell cell) {
  switch (cell) {
    case Cell::TreatedFocal: return "G_g x S_s";
    case Cell::TreatedOther: return "G_g x S_s'";
    case Cell::ComparisonFocal: return "C_c x S_s";
    case Cell::ComparisonOther: return "C_c x S_s'";
  }
  return "?";
}

void DesignSpec::validate() const {
  if (!(trim_threshold > 0.0 && trim_threshold < 0.5)) {
    throw UsageError("trim threshold must lie in (0, 0.5)");
  }
  if (!(level > 0.0 && level < 1.0)) throw UsageError("confidence level must lie in (0, 1)");
  if (!focal.empty() && focal == other) {
    throw UsageError("subgroup of interest and comparison subgroup must differ");
  }
}

namespace {

std::vector<std::string> sorted_labels(const std::vector<std::string>& subgroups) {
  std::set<std::string> set(subgroups.begin(), subgroups.end());
  return {set.begin(), set.end()};
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& covariates, const std::vector<std::string>& all,
                               const std::vector<std::string>& names) {
  Eigen::MatrixXd out(covariates.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = std::find(all.begin(), all.end(), names[j]);
    if (it == all.end()) throw SchemaError("unknown covariate '" + names[j] + "'");
    out.col(static_cast<Eigen::Index>(j)) = covariates.col(it - all.begin());
  }
  return out;
}

std::vector<int> distinct_treated(const std::vector<Cohort>& cohorts) {
  std::set<int> periods;
  for (const auto& c : cohorts) {
    if (!c.is_never()) periods.insert(c.period());
  }
  return {periods.begin(), periods.end()};
}

Cohort parse_cohort(std::string_view text, std::size_t line) {
  auto trimmed = csv::trim(text);
  std::string lower(trimmed);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower.empty() || lower == "never" || lower == "inf" || lower == "+inf" || lower == "infinity") {
    return Cohort::never();
  }
  auto value = csv::parse_int(trimmed);
  if (!value) throw ParseError(line, "line " + std::to_string(line) + ": cohort '" + std::string(text) + "' is not an integer period, blank, never, or inf");
  return Cohort::at(static_cast<int>(*value));
}

struct ResolvedColumns {
  std::size_t unit = 0, time = 0, outcome = 0, cohort = 0, subgroup = 0;
  std::vector<std::size_t> covariates;
  std::vector<std::string> covariate_names;
};

ResolvedColumns resolve_columns(const csv::Table& table, const PanelSchema& schema, bool with_unit) {
  ResolvedColumns cols;
  auto need = [&](const std::string& name) {
    auto idx = table.column(name);
    if (!idx) throw SchemaError("missing required column '" + name + "'");
    return *idx;
  };
  if (with_unit) cols.unit = need(schema.unit);
  cols.time = need(schema.time);
  cols.outcome = need(schema.outcome);
  cols.cohort = need(schema.cohort);
  cols.subgroup = need(schema.subgroup);
  if (schema.covariates.empty()) {
    std::set<std::string> reserved = {schema.time, schema.outcome, schema.cohort, schema.subgroup};
    if (with_unit) reserved.insert(schema.unit);
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (!reserved.count(table.header[j])) {
        cols.covariates.push_back(j);
        cols.covariate_names.push_back(table.header[j]);
      }
    }
  } else {
    for (const auto& name : schema.covariates) {
      cols.covariates.push_back(need(name));
      cols.covariate_names.push_back(name);
    }
  }
  return cols;
}

double parse_number(const std::string& field, std::size_t line, const std::string& column) {
  auto value = csv::parse_double(field);
  if (!value) {
    if (csv::trim(field).empty()) {
      throw ParseError(line, "line " + std::to_string(line) + ": missing value in column '" + column + "'");
    }
    throw ParseError(line, "line " + std::to_string(line) + ": non-numeric value '" + field +
                               "' in column '" + column + "'");
  }
  return *value;
}

int parse_time(const std::string& field, std::size_t line) {
  auto value = csv::parse_int(field);
  if (!value) throw ParseError(line, "line " + std::to_string(line) + ": time '" + field + "' is not an integer");
  return static_cast<int>(*value);
}

void check_cohort_range(const std::vector<Cohort>& cohorts, const std::vector<std::string>& ids,
                        int min_time, int max_time) {
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    if (cohorts[i].is_never()) continue;
    const int g = cohorts[i].period();
    if (g <= min_time) {
      throw DataError("unit '" + ids[i] + "' has cohort " + std::to_string(g) +
                      " <= first observed period " + std::to_string(min_time) +
                      " (always-treated units are not supported)");
    }
    if (g > max_time) {
      throw DataError("unit '" + ids[i] + "' has cohort " + std::to_string(g) +
                      " beyond the last observed period " + std::to_string(max_time));
    }
  }
}

}  // namespace

PanelDataset::PanelDataset(std::vector<std::string> unit_ids, std::vector<Cohort> cohorts,
                           std::vector<std::string> subgroups, std::vector<std::string> covariate_names,
                           Eigen::MatrixXd covariates, std::vector<int> times, Eigen::MatrixXd outcomes)
    : unit_ids_(std::move(unit_ids)),
      cohorts_(std::move(cohorts)),
      subgroups_(std::move(subgroups)),
      covariate_names_(std::move(covariate_names)),
      covariates_(std::move(covariates)),
      times_(std::move(times)),
      outcomes_(std::move(outcomes)) {
  const auto n = unit_ids_.size();
  if (cohorts_.size() != n || subgroups_.size() != n || static_cast<std::size_t>(covariates_.rows()) != n ||
      static_cast<std::size_t>(outcomes_.rows()) != n) {
    throw DataError("panel columns have inconsistent lengths");
  }
  if (static_cast<std::size_t>(covariates_.cols()) != covariate_names_.size()) {
    throw DataError("covariate names do not match covariate arity");
  }
  if (static_cast<std::size_t>(outcomes_.cols()) != times_.size()) {
    throw DataError("outcome matrix does not match the time set");
  }
  if (!std::is_sorted(times_.begin(), times_.end()) ||
      std::adjacent_find(times_.begin(), times_.end()) != times_.end()) {
    throw DataError("time set must be strictly increasing");
  }
  if (times_.size() < 2) throw DataError("a panel needs at least two periods");
  labels_ = sorted_labels(subgroups_);
  if (labels_.size() < 2) throw DataError("at least two subgroup labels are required");
  check_cohort_range(cohorts_, unit_ids_, times_.front(), times_.back());
}

bool PanelDataset::has_time(int t) const {
  return std::binary_search(times_.begin(), times_.end(), t);
}

std::size_t PanelDataset::time_index(int t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.end() || *it != t) throw UsageError("period " + std::to_string(t) + " is not in the panel");
  return static_cast<std::size_t>(it - times_.begin());
}

bool PanelDataset::has_never_treated() const {
  return std::any_of(cohorts_.begin(), cohorts_.end(), [](const Cohort& c) { return c.is_never(); });
}

std::vector<int> PanelDataset::treated_cohorts() const { return distinct_treated(cohorts_); }

Eigen::MatrixXd PanelDataset::covariate_columns(const std::vector<std::string>& names) const {
  return select_columns(covariates_, covariate_names_, names);
}

bool PanelDataset::operator==(const PanelDataset& other) const {
  return unit_ids_ == other.unit_ids_ && cohorts_ == other.cohorts_ && subgroups_ == other.subgroups_ &&
         covariate_names_ == other.covariate_names_ && covariates_ == other.covariates_ &&
         times_ == other.times_ && outcomes_ == other.outcomes_;
}

RepeatedCrossSection::RepeatedCrossSection(std::vector<int> times, Eigen::VectorXd outcomes,
                                           std::vector<Cohort> cohorts, std::vector<std::string> subgroups,
                                           std::vector<std::string> covariate_names, Eigen::MatrixXd covariates)
    : times_(std::move(times)),
      outcomes_(std::move(outcomes)),
      cohorts_(std::move(cohorts)),
      subgroups_(std::move(subgroups)),
      covariate_names_(std::move(covariate_names)),
      covariates_(std::move(covariates)) {
  const auto n = times_.size();
  if (static_cast<std::size_t>(outcomes_.size()) != n || cohorts_.size() != n || subgroups_.size() != n ||
      static_cast<std::size_t>(covariates_.rows()) != n) {
    throw DataError("repeated cross-section columns have inconsistent lengths");
  }
  if (static_cast<std::size_t>(covariates_.cols()) != covariate_names_.size()) {
    throw DataError("covariate names do not match covariate arity");
  }
  labels_ = sorted_labels(subgroups_);
  if (labels_.size() < 2) throw DataError("at least two subgroup labels are required");
  std::set<int> periods(times_.begin(), times_.end());
  periods_.assign(periods.begin(), periods.end());
  if (periods_.size() < 2) throw DataError("a repeated cross-section needs at least two periods");
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "observation " + std::to_string(i + 1);
  check_cohort_range(cohorts_, ids, periods_.front(), periods_.back());
}

bool RepeatedCrossSection::has_never_treated() const {
  return std::any_of(cohorts_.begin(), cohorts_.end(), [](const Cohort& c) { return c.is_never(); });
}

std::vector<int> RepeatedCrossSection::treated_cohorts() const { return distinct_treated(cohorts_); }

Eigen::MatrixXd RepeatedCrossSection::covariate_columns(const std::vector<std::string>& names) const {
  return select_columns(covariates_, covariate_names_, names);
}

PanelDataset load_panel(const std::string& path, const PanelSchema& schema) {
  const auto table = csv::read(path);
  const auto cols = resolve_columns(table, schema, true);
  const std::size_t k = cols.covariates.size();

  struct UnitAcc {
    std::string id;
    Cohort cohort = Cohort::never();
    std::string subgroup;
    std::vector<double> x;
    std::map<int, double> y;
    std::size_t first_line = 0;
  };
  std::vector<UnitAcc> units;
  std::unordered_map<std::string, std::size_t> index;
  std::set<int> time_set;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.lines[r];
    const std::string id(csv::trim(row[cols.unit]));
    if (id.empty()) throw ParseError(line, "line " + std::to_string(line) + ": empty unit id");
    const int t = parse_time(row[cols.time], line);
    const double y = parse_number(row[cols.outcome], line, schema.outcome);
    const Cohort cohort = parse_cohort(row[cols.cohort], line);
    const std::string subgroup(csv::trim(row[cols.subgroup]));
    if (subgroup.empty()) throw ParseError(line, "line " + std::to_string(line) + ": empty subgroup label");
    std::vector<double> x(k);
    for (std::size_t j = 0; j < k; ++j) x[j] = parse_number(row[cols.covariates[j]], line, cols.covariate_names[j]);

    auto [it, inserted] = index.try_emplace(id, units.size());
    if (inserted) {
      units.push_back(UnitAcc{id, cohort, subgroup, x, {}, line});
    }
    auto& u = units[it->second];
    if (!inserted) {
      if (!(u.cohort == cohort) || u.subgroup != subgroup) {
        throw DataError("unit '" + id + "' changes cohort or subgroup between rows (line " +
                        std::to_string(line) + ")");
      }
      if (u.x != x) {
        throw DataError("unit '" + id + "' has time-varying covariates (line " + std::to_string(line) +
                        "); covariates must be constant within a unit");
      }
    }
    if (!u.y.emplace(t, y).second) {
      throw DataError("unit '" + id + "' has duplicate rows for period " + std::to_string(t));
    }
    time_set.insert(t);
  }
  if (units.empty()) throw DataError("no data rows in '" + path + "'");

  std::vector<int> times(time_set.begin(), time_set.end());
  const auto n = units.size();
  std::vector<std::string> ids(n), subgroups(n);
  std::vector<Cohort> cohorts(n, Cohort::never());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = units[i];
    if (u.y.size() != times.size()) {
      for (int t : times) {
        if (!u.y.count(t)) {
          throw BalanceError(u.id, "unbalanced panel: unit '" + u.id + "' has no observation for period " +
                                       std::to_string(t));
        }
      }
    }
    ids[i] = u.id;
    cohorts[i] = u.cohort;
    subgroups[i] = u.subgroup;
    for (std::size_t j = 0; j < k; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = u.x[j];
    std::size_t c = 0;
    for (const auto& [t, y] : u.y) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c++)) = y;
  }
  return PanelDataset(std::move(ids), std::move(cohorts), std::move(subgroups), cols.covariate_names,
                      std::move(X), std::move(times), std::move(Y));
}

namespace {

std::string cohort_field(const Cohort& c) { return c.is_never() ? "never" : std::to_string(c.period()); }

}  // namespace

void write_panel(const PanelDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "unit,time,y,cohort,subgroup";
  for (const auto& name : data.covariate_names()) out << ',' << csv::escape(name);
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < data.times().size(); ++c) {
      out << csv::escape(data.unit_ids()[i]) << ',' << data.times()[c] << ','
          << csv::format_double(data.outcomes()(r, static_cast<Eigen::Index>(c))) << ','
          << cohort_field(data.cohorts()[i]) << ',' << csv::escape(data.subgroups()[i]);
      for (Eigen::Index j = 0; j < data.covariates().cols(); ++j) {
        out << ',' << csv::format_double(data.covariates()(r, j));
      }
      out << '\n';
    }
  }
}

RepeatedCrossSection load_repeated_cross_section(const std::string& path, const PanelSchema& schema) {
  const auto table = csv::read(path);
  const auto cols = resolve_columns(table, schema, false);
  const std::size_t k = cols.covariates.size();
  const std::size_t n = table.rows.size();
  if (n == 0) throw DataError("no data rows in '" + path + "'");
  std::vector<int> times(n);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::vector<Cohort> cohorts(n, Cohort::never());
  std::vector<std::string> subgroups(n);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const auto line = table.lines[r];
    times[r] = parse_time(row[cols.time], line);
    y(static_cast<Eigen::Index>(r)) = parse_number(row[cols.outcome], line, schema.outcome);
    cohorts[r] = parse_cohort(row[cols.cohort], line);
    subgroups[r] = std::string(csv::trim(row[cols.subgroup]));
    if (subgroups[r].empty()) throw ParseError(line, "line " + std::to_string(line) + ": empty subgroup label");
    for (std::size_t j = 0; j < k; ++j) {
      X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_number(row[cols.covariates[j]], line, cols.covariate_names[j]);
    }
  }
  return RepeatedCrossSection(std::move(times), std::move(y), std::move(cohorts), std::move(subgroups),
                              cols.covariate_names, std::move(X));
}

void write_repeated_cross_section(const RepeatedCrossSection& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "time,y,cohort,subgroup";
  for (const auto& name : data.covariate_names()) out << ',' << csv::escape(name);
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << data.times()[i] << ',' << csv::format_double(data.outcomes()(r)) << ','
        << cohort_field(data.cohorts()[i]) << ',' << csv::escape(data.subgroups()[i]);
    for (Eigen::Index j = 0; j < data.covariates().cols(); ++j) {
      out << ',' << csv::format_double(data.covariates()(r, j));
    }
    out << '\n';
  }
}

RepeatedCrossSection flatten_to_repeated_cross_section(const PanelDataset& panel) {
  const auto n = panel.size();
  const auto T = panel.times().size();
  const auto rows = n * T;
  std::vector<int> times(rows);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  std::vector<Cohort> cohorts(rows, Cohort::never());
  std::vector<std::string> subgroups(rows);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), panel.covariates().cols());
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < T; ++c, ++r) {
      times[r] = panel.times()[c];
      y(static_cast<Eigen::Index>(r)) = panel.outcomes()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      cohorts[r] = panel.cohorts()[i];
      subgroups[r] = panel.subgroups()[i];
      X.row(static_cast<Eigen::Index>(r)) = panel.covariates().row(static_cast<Eigen::Index>(i));
    }
  }
  return RepeatedCrossSection(std::move(times), std::move(y), std::move(cohorts), std::move(subgroups),
                              panel.covariate_names(), std::move(X));
}

Comparison resolve_comparison(const DesignSpec& spec, bool has_never_treated) {
  if (spec.comparison) return *spec.comparison;
  return has_never_treated ? Comparison::Never : Comparison::NotYet;
}

namespace {

bool in_comparison(const Cohort& cohort, int g, int t, Comparison comparison) {
  if (comparison == Comparison::Never) return cohort.is_never();
  return !cohort.treated_at(t) && !(cohort == Cohort::at(g));
}

void check_subgroups(const std::vector<std::string>& labels, const DesignSpec& spec) {
  for (const auto* label : {&spec.focal, &spec.other}) {
    if (label->empty()) throw UsageError("both subgroups s and s' must be specified");
    if (!std::binary_search(labels.begin(), labels.end(), *label)) {
      throw UsageError("subgroup '" + *label + "' does not occur in the data");
    }
  }
  if (spec.focal == spec.other) throw UsageError("subgroup of interest and comparison subgroup must differ");
}

// Shared core of both build_cells overloads. `period_of(i)` returns the
// observation period for repeated cross-sections and is ignored for panels.
template <class PeriodOf>
CellIndicators classify(const std::vector<Cohort>& cohorts, const std::vector<std::string>& subgroups,
                        bool has_never, int g, int t, const DesignSpec& spec, bool repeated,
                        PeriodOf period_of) {
  CellIndicators cells;
  cells.g = g;
  cells.t = t;
  cells.focal = spec.focal;
  cells.other = spec.other;
  cells.comparison = resolve_comparison(spec, has_never);
  cells.population = cohorts.size();
  if (cells.comparison == Comparison::Never && !has_never) {
    throw DegenerateDesignError(
        "comparison=never requested but the data contain no never-treated units; "
        "use the not-yet-treated comparison group (--comparison notyet) instead");
  }
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    if (repeated) {
      const int p = period_of(i);
      if (p != t && p != g - 1) continue;  // outside the two periods of this problem
    }
    const bool treated = cohorts[i] == Cohort::at(g);
    const bool comparison = !treated && in_comparison(cohorts[i], g, t, cells.comparison);
    const bool focal = subgroups[i] == spec.focal;
    const bool other = subgroups[i] == spec.other;
    if (!(treated || comparison) || !(focal || other)) {
      cells.excluded.push_back(i);
      continue;
    }
    Cell cell = treated ? (focal ? Cell::TreatedFocal : Cell::TreatedOther)
                        : (focal ? Cell::ComparisonFocal : Cell::ComparisonOther);
    cells.rows.push_back(i);
    cells.cells.push_back(cell);
    if (repeated) cells.post.push_back(period_of(i) == t ? 1 : 0);
    ++cells.counts[static_cast<std::size_t>(cell)];
  }
  return cells;
}

void require_nonempty(const CellIndicators& cells) {
  for (std::size_t c = 0; c < kCellCount; ++c) {
    if (cells.counts[c] == 0) {
      throw DegenerateDesignError("degenerate design for (g=" + std::to_string(cells.g) + ", t=" +
                                  std::to_string(cells.t) + ", comparison=" + to_string(cells.comparison) +
                                  "): cell " + describe(static_cast<Cell>(c)) + " (s='" + cells.focal +
                                  "', s'='" + cells.other + "') is empty");
    }
  }
}

}  // namespace

CellIndicators build_cells(const PanelDataset& data, int g, int t, const DesignSpec& spec) {
  if (t < g) throw UsageError("t must be >= g (got g=" + std::to_string(g) + ", t=" + std::to_string(t) + ")");
  if (!data.has_time(g - 1)) throw UsageError("base period g-1=" + std::to_string(g - 1) + " is not in the panel");
  if (!data.has_time(t)) throw UsageError("period t=" + std::to_string(t) + " is not in the panel");
  check_subgroups(data.subgroup_labels(), spec);
  auto cells = classify(data.cohorts(), data.subgroups(), data.has_never_treated(), g, t, spec, false,
                        [](std::size_t) { return 0; });
  require_nonempty(cells);
  return cells;
}

CellIndicators build_cells(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec) {
  if (t < g) throw UsageError("t must be >= g (got g=" + std::to_string(g) + ", t=" + std::to_string(t) + ")");
  check_subgroups(data.subgroup_labels(), spec);
  auto cells = classify(data.cohorts(), data.subgroups(), data.has_never_treated(), g, t, spec, true,
                        [&](std::size_t i) { return data.times()[i]; });
  // Every cell must be observed in both periods.
  for (std::uint8_t period : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::array<std::size_t, kCellCount> counts{};
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (cells.post[k] == period) ++counts[static_cast<std::size_t>(cells.cells[k])];
    }
    for (std::size_t c = 0; c < kCellCount; ++c) {
      if (counts[c] == 0) {
        throw DegenerateDesignError("degenerate design for (g=" + std::to_string(g) + ", t=" + std::to_string(t) +
                                    "): cell " + describe(static_cast<Cell>(c)) + " has no observations in period " +
                                    std::to_string(period ? t : g - 1));
      }
    }
  }
  return cells;
}

ValidationReport validate_design(const PanelDataset& data, const DesignSpec& spec) {
  spec.validate();
  ValidationReport report;
  report.units = data.size();
  report.times = data.times();
  report.subgroup_labels = data.subgroup_labels();
  check_subgroups(data.subgroup_labels(), spec);
  const auto comparison = resolve_comparison(spec, data.has_never_treated());
  if (comparison == Comparison::Never && !data.has_never_treated()) {
    report.fatal_findings.push_back("comparison=never requested but no never-treated units exist; use notyet");
    return report;
  }
  for (int g : data.treated_cohorts()) {
    if (!data.has_time(g - 1)) continue;
    for (int t : data.times()) {
      if (t < g) continue;
      CellShareCheck check;
      check.g = g;
      check.t = t;
      check.comparison = comparison;
      auto cells = classify(data.cohorts(), data.subgroups(), data.has_never_treated(), g, t, spec, false,
                            [](std::size_t) { return 0; });
      check.counts = cells.counts;
      const double total = static_cast<double>(cells.size());
      for (std::size_t c = 0; c < kCellCount; ++c) {
        check.shares[c] = total > 0 ? static_cast<double>(cells.counts[c]) / total : 0.0;
        const auto name = std::string(describe(static_cast<Cell>(c)));
        if (cells.counts[c] == 0) {
          check.fatal = true;
          check.findings.push_back("cell " + name + " is empty");
          report.fatal_findings.push_back("(g=" + std::to_string(g) + ", t=" + std::to_string(t) + "): cell " +
                                          name + " is empty");
        } else if (check.shares[c] < spec.trim_threshold) {
          check.findings.push_back("cell " + name + " share " + csv::format_double(check.shares[c]) +
                                   " is below the overlap threshold " + csv::format_double(spec.trim_threshold));
        }
      }
      report.checks.push_back(std::move(check));
    }
  }
  if (report.checks.empty()) {
    report.fatal_findings.push_back("no estimable (g, t) pair: no treated cohort has its base period g-1 in the panel");
  }
  return report;
}

std::string ValidationReport::to_text() const {
  std::ostringstream out;
  out << "units: " << units << "\nperiods:";
  for (int t : times) out << ' ' << t;
  out << "\nsubgroups:";
  for (const auto& s : subgroup_labels) out << ' ' << s;
  out << "\ntreatment irreversibility: holds (W derived from cohort)\n";
  for (const auto& check : checks) {
    out << "(g=" << check.g << ", t=" << check.t << ", comparison=" << to_string(check.comparison) << ")";
    for (std::size_t c = 0; c < kCellCount; ++c) {
      out << "  " << describe(static_cast<Cell>(c)) << ": " << check.counts[c] << " ("
          << csv::format_double(check.shares[c]) << ")";
    }
    out << '\n';
    for (const auto& finding : check.findings) out << "  - " << finding << '\n';
  }
  out << "status: " << (passed() ? "pass" : "fail") << '\n';
  for (const auto& f : fatal_findings) out << "fatal: " << f << '\n';
  return out.str();
}

std::string ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["status"] = passed() ? "pass" : "fail";
  j["units"] = units;
  j["times"] = times;
  j["subgroups"] = subgroup_labels;
  j["irreversibility_holds"] = irreversibility_holds;
  j["fatal_findings"] = fatal_findings;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& check : checks) {
    nlohmann::ordered_json c;
    c["g"] = check.g;
    c["t"] = check.t;
    c["comparison"] = to_string(check.comparison);
    auto cells = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < kCellCount; ++k) {
      cells.push_back({{"cell", describe(static_cast<Cell>(k))}, {"count", check.counts[k]}, {"share", check.shares[k]}});
    }
    c["cells"] = cells;
    c["findings"] = check.findings;
    c["fatal"] = check.fatal;
    arr.push_back(c);
  }
  j["checks"] = arr;
  return j.dump(2);
}

}  // namespace tripdiff
