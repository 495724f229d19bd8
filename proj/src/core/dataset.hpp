#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tripdiff {

// First treated period of a unit. Never-treated units carry a sentinel rather
// than a large integer so that no arithmetic on "infinity" is possible.
class Cohort {
 public:
  static Cohort never() { return Cohort(); }
  static Cohort at(int period) { return Cohort(period); }

  bool is_never() const noexcept { return !period_.has_value(); }
  int period() const;  // throws on a never-treated cohort

  // Treatment status W_t = 1[t >= g]; always 0 for never-treated units.
  bool treated_at(int t) const noexcept { return period_ && t >= *period_; }

  bool operator==(const Cohort&) const = default;

 private:
  Cohort() = default;
  explicit Cohort(int period) : period_(period) {}
  std::optional<int> period_;
};

enum class Comparison { NotYet, Never };
enum class Estimand { DATT, CDATT, ATTUnaffected, Bound };
enum class Estimator { Unadjusted, ThreeWFE, RA, IPW, DR };

const char* to_string(Comparison c);
const char* to_string(Estimand e);
const char* to_string(Estimator e);
Comparison parse_comparison(const std::string& text);
Estimand parse_estimand(const std::string& text);
Estimator parse_estimator(const std::string& text);

// The four treatment x subgroup cells of one (g, t) problem, in the category
// order used by the propensity model. ComparisonOther is the base category.
enum class Cell : std::uint8_t {
  TreatedFocal = 0,      // G_g * S_s
  TreatedOther = 1,      // G_g * S_s'
  ComparisonFocal = 2,   // C_c * S_s
  ComparisonOther = 3,   // C_c * S_s'
};
constexpr std::size_t kCellCount = 4;
const char* describe(Cell cell);

struct DesignSpec {
  Estimand estimand = Estimand::CDATT;
  Estimator estimator = Estimator::DR;
  // Unset means: never-treated if any exist, otherwise not-yet-treated.
  std::optional<Comparison> comparison;
  std::string focal;  // subgroup of interest s
  std::string other;  // comparison subgroup s'
  std::vector<std::string> covariates;
  // Working-model specific overrides; fall back to `covariates` when unset.
  std::optional<std::vector<std::string>> ps_covariates;
  std::optional<std::vector<std::string>> or_covariates;
  double trim_threshold = 0.005;
  // Drop units violating overlap (with a warning) instead of failing.
  bool trim_drop = false;
  double level = 0.95;

  const std::vector<std::string>& propensity_covariates() const {
    return ps_covariates ? *ps_covariates : covariates;
  }
  const std::vector<std::string>& outcome_covariates() const {
    return or_covariates ? *or_covariates : covariates;
  }

  // Checks the scalar invariants: trim threshold in (0, 0.5), level in (0, 1),
  // focal != other.
  void validate() const;
};

struct PanelSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "y";
  std::string cohort = "cohort";
  std::string subgroup = "subgroup";
  // Empty: every remaining column is a covariate.
  std::vector<std::string> covariates;
};

// Balanced panel in unit-major layout. Immutable after construction.
class PanelDataset {
 public:
  PanelDataset(std::vector<std::string> unit_ids, std::vector<Cohort> cohorts,
               std::vector<std::string> subgroups, std::vector<std::string> covariate_names,
               Eigen::MatrixXd covariates, std::vector<int> times, Eigen::MatrixXd outcomes);

  std::size_t size() const noexcept { return unit_ids_.size(); }
  const std::vector<std::string>& unit_ids() const noexcept { return unit_ids_; }
  const std::vector<Cohort>& cohorts() const noexcept { return cohorts_; }
  const std::vector<std::string>& subgroups() const noexcept { return subgroups_; }
  // Sorted distinct subgroup labels.
  const std::vector<std::string>& subgroup_labels() const noexcept { return labels_; }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  const std::vector<int>& times() const noexcept { return times_; }
  const Eigen::MatrixXd& outcomes() const noexcept { return outcomes_; }

  bool has_time(int t) const;
  std::size_t time_index(int t) const;
  double outcome(std::size_t unit, int t) const { return outcomes_(unit, time_index(t)); }
  bool has_never_treated() const;
  // Distinct treated cohort periods, ascending.
  std::vector<int> treated_cohorts() const;

  // Columns of the covariate matrix selected by name, in the given order.
  Eigen::MatrixXd covariate_columns(const std::vector<std::string>& names) const;

  bool operator==(const PanelDataset& other) const;

 private:
  std::vector<std::string> unit_ids_;
  std::vector<Cohort> cohorts_;
  std::vector<std::string> subgroups_;
  std::vector<std::string> labels_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
  std::vector<int> times_;
  Eigen::MatrixXd outcomes_;
};

// Fresh draws each period; covariates, cohort and subgroup are time-invariant
// attributes of each observation.
class RepeatedCrossSection {
 public:
  RepeatedCrossSection(std::vector<int> times, Eigen::VectorXd outcomes, std::vector<Cohort> cohorts,
                       std::vector<std::string> subgroups, std::vector<std::string> covariate_names,
                       Eigen::MatrixXd covariates);

  std::size_t size() const noexcept { return times_.size(); }
  const std::vector<int>& times() const noexcept { return times_; }
  const Eigen::VectorXd& outcomes() const noexcept { return outcomes_; }
  const std::vector<Cohort>& cohorts() const noexcept { return cohorts_; }
  const std::vector<std::string>& subgroups() const noexcept { return subgroups_; }
  const std::vector<std::string>& subgroup_labels() const noexcept { return labels_; }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  // Distinct observation periods, ascending.
  const std::vector<int>& periods() const noexcept { return periods_; }
  bool has_never_treated() const;
  std::vector<int> treated_cohorts() const;
  Eigen::MatrixXd covariate_columns(const std::vector<std::string>& names) const;

 private:
  std::vector<int> times_;
  Eigen::VectorXd outcomes_;
  std::vector<Cohort> cohorts_;
  std::vector<std::string> subgroups_;
  std::vector<std::string> labels_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
  std::vector<int> periods_;
};

// Cell membership for one (g, t, comparison, s, s') problem. Rows index units
// (panel) or observations (repeated cross-section).
struct CellIndicators {
  int g = 0;
  int t = 0;
  Comparison comparison = Comparison::Never;
  std::string focal;
  std::string other;
  std::size_t population = 0;          // rows in the source data
  std::vector<std::size_t> rows;       // included rows, ascending
  std::vector<Cell> cells;             // cell of each included row
  std::vector<std::uint8_t> post;      // repeated cross-section only: 1 if period t, 0 if g-1
  std::array<std::size_t, kCellCount> counts{};
  std::vector<std::size_t> excluded;   // rows in neither G_g/C_c or neither s/s'

  std::size_t size() const noexcept { return rows.size(); }
  bool treated(std::size_t k) const noexcept {
    return cells[k] == Cell::TreatedFocal || cells[k] == Cell::TreatedOther;
  }
  bool focal_subgroup(std::size_t k) const noexcept {
    return cells[k] == Cell::TreatedFocal || cells[k] == Cell::ComparisonFocal;
  }
};

PanelDataset load_panel(const std::string& path, const PanelSchema& schema = {});
void write_panel(const PanelDataset& data, const std::string& path);
RepeatedCrossSection load_repeated_cross_section(const std::string& path,
                                                 const PanelSchema& schema = {});
void write_repeated_cross_section(const RepeatedCrossSection& data, const std::string& path);

// Every unit contributes one observation per period.
RepeatedCrossSection flatten_to_repeated_cross_section(const PanelDataset& panel);

// Resolves an unset comparison to never-treated when available.
Comparison resolve_comparison(const DesignSpec& spec, bool has_never_treated);

CellIndicators build_cells(const PanelDataset& data, int g, int t, const DesignSpec& spec);
CellIndicators build_cells(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec);

struct CellShareCheck {
  int g = 0;
  int t = 0;
  Comparison comparison = Comparison::Never;
  std::array<std::size_t, kCellCount> counts{};
  std::array<double, kCellCount> shares{};
  std::vector<std::string> findings;
  bool fatal = false;
};

struct ValidationReport {
  std::size_t units = 0;
  std::vector<int> times;
  std::vector<std::string> subgroup_labels;
  std::vector<CellShareCheck> checks;
  // W_it = 1[t >= g] is derived from the cohort, so it is monotone by
  // construction on any loaded dataset.
  bool irreversibility_holds = true;
  std::vector<std::string> fatal_findings;
  bool passed() const { return fatal_findings.empty(); }

  std::string to_text() const;
  std::string to_json() const;
};

ValidationReport validate_design(const PanelDataset& data, const DesignSpec& spec);

}  // namespace tripdiff
