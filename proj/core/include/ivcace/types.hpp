#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivcace {

/// Latent compliance class. Defiers are excluded by monotonicity, so only
/// three classes exist. The integer values double as array indices.
enum class ComplianceClass : int { NeverTaker = 0, Complier = 1, AlwaysTaker = 2 };

inline constexpr std::array<ComplianceClass, 3> kAllClasses = {
    ComplianceClass::NeverTaker, ComplianceClass::Complier, ComplianceClass::AlwaysTaker};

constexpr int index_of(ComplianceClass u) { return static_cast<int>(u); }

const char* to_string(ComplianceClass u);

/// Treatment received by class `u` under instrument value `z`.
constexpr int treatment_for(ComplianceClass u, int z) {
  switch (u) {
    case ComplianceClass::NeverTaker: return 0;
    case ComplianceClass::AlwaysTaker: return 1;
    case ComplianceClass::Complier: return z;
  }
  return 0;
}

/// Input that violates a documented precondition (bad dimensions, level out of
/// range, malformed file).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure during estimation (zero-probability stratum, empty arm).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Categorical covariate layout. The intercept is implicit and always occupies
/// slot 0 of every design vector. Fully observed covariates precede partially
/// observed ones.
struct CovariateSpec {
  std::vector<std::string> names;
  std::vector<int> levels;
  std::vector<bool> fully_observed;
  /// Adds a y*z interaction to the complier response model. Needed when the
  /// missingness probabilities are an unrestricted table over (y, z), as in the
  /// single-binary-covariate simulation design.
  bool response_yz_interaction = false;

  std::size_t num_covariates() const { return levels.size(); }
  std::size_t num_fully_observed() const;
  std::size_t num_partial() const { return num_covariates() - num_fully_observed(); }
  /// Length of the full design vector (intercept + every covariate).
  std::size_t design_size() const { return num_covariates() + 1; }
  /// Length of the design vector over the intercept and fully observed covariates.
  std::size_t observed_design_size() const { return num_fully_observed() + 1; }

  /// Throws ValidationError when the layout breaks an invariant.
  void validate() const;
};

inline constexpr int kMissing = -1;

/// One subject. Covariate values are 0-based level indices, or kMissing.
struct Record {
  std::vector<int> x;
  int z = 0;
  int d = 0;
  int y = 0;
};

using Dataset = std::vector<Record>;

/// Checks a record against the spec; throws ValidationError with `row` in the
/// message on failure.
void validate_record(const Record& rec, const CovariateSpec& spec, std::size_t row);

}  // namespace ivcace
