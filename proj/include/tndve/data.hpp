#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tndve/config.hpp"

namespace tndve {

/// Maps dataset columns onto the roles of a test-negative design analysis:
/// treatment A, outcome Y, negative control exposures Z (nce), negative
/// control outcomes W (nco) and measured covariates X.
struct VariableRoles {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> nce;
  std::vector<std::string> nco;
  std::vector<std::string> covariates;
  /// Columns (from nce/nco/covariates) holding integer category codes.
  std::vector<std::string> categorical;

  /// Throws ConfigError if a role is missing, nce/nco is empty, or a column
  /// appears in two roles.
  void check() const;

  bool is_categorical(const std::string& column) const;

  /// Reads the role keys either from a `[roles]` table or from the top level:
  /// treatment = "A", outcome = "Y", nce = ["Z1"], nco = ["W1"], covariates = [...],
  /// categorical = [...].
  static VariableRoles from_config(const ConfigDocument& doc);

  bool operator==(const VariableRoles&) const = default;
};

struct TndRecord {
  int a = 0;
  int y = 0;
  std::vector<double> z;
  std::vector<double> w;
  std::vector<double> x;
};

enum class RoleKind { treatment, outcome, nce, nco, covariate };

/// Column location inside a sample.
struct ColumnRef {
  RoleKind role;
  Eigen::Index index = 0;  // position inside the role's column list
};

/// A selected (tested) study sample. Every stored subject belongs to the
/// sample, so the selection indicator is implicit. Storage is columnar and the
/// object is immutable after construction.
class TndSample {
 public:
  /// Structural checks only (dimensions, finiteness, n >= 1). Binary-ness of
  /// A and Y and arm coverage are reported by validate().
  TndSample(VariableRoles roles, Eigen::VectorXd a, Eigen::VectorXd y, Eigen::MatrixXd z,
            Eigen::MatrixXd w, Eigen::MatrixXd x);

  static TndSample from_records(VariableRoles roles, const std::vector<TndRecord>& records);

  Eigen::Index n() const { return a_.size(); }
  const VariableRoles& roles() const { return roles_; }

  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::MatrixXd& w() const { return w_; }
  const Eigen::MatrixXd& x() const { return x_; }

  TndRecord record(Eigen::Index i) const;

  /// Resolves a column name; nullopt if the name is not assigned a role.
  std::optional<ColumnRef> find(const std::string& name) const;
  Eigen::VectorXd column(const std::string& name) const;

  /// Sorted distinct values of a column.
  std::vector<double> levels(const std::string& name) const;

  /// Sample with A replaced by 1-A (all other columns unchanged).
  TndSample with_flipped_treatment() const;

 private:
  VariableRoles roles_;
  Eigen::VectorXd a_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd z_;
  Eigen::MatrixXd w_;
  Eigen::MatrixXd x_;
};

enum class Severity { warning, fatal };

struct Finding {
  Severity severity;
  std::string code;
  std::string message;

  bool operator==(const Finding&) const = default;
};

/// Data-quality findings. Fatal: non-binary A or Y, an empty treatment arm,
/// no cases in an arm. Warning: constant NCE/NCO column, case fraction above
/// the rare-infection threshold.
std::vector<Finding> validate(const TndSample& sample);

inline constexpr double kRareCaseFractionThreshold = 0.2;

bool has_fatal(const std::vector<Finding>& findings);

/// Throws DegenerateDataError describing the first fatal finding, if any.
void require_estimable(const TndSample& sample);

/// Reads a comma-separated file with a header row. Only role columns are
/// parsed; others are ignored. Missing or non-numeric role cells are errors
/// (row numbers are 1-based data rows), never imputed.
TndSample load_csv(const std::filesystem::path& path, const VariableRoles& roles);
TndSample parse_csv(const std::string& text, const VariableRoles& roles,
                    const std::string& source = "<string>");

/// Writes role columns in the order A, Y, nce..., nco..., covariates...
/// Integral values are written as integers, others in shortest round-trip form.
std::string to_csv(const TndSample& sample);
void write_csv(const TndSample& sample, const std::filesystem::path& path);

}  // namespace tndve
