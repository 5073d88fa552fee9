#pragma once

// Feature maps: ordered lists of product terms over sample columns. One
// mechanism serves the bridge model q(A,Z,X;tau), the moment function
// m(W,A,X), the weight function c(X) and the conditional effect model
// beta(X;alpha).
//
// Term syntax: factors joined by '*'. A factor is
//   1            the constant (only as the whole term)
//   NAME         a numeric column, or the treatment column
//   NAME==LEVEL  indicator that a categorical column equals LEVEL

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tndve/data.hpp"

namespace tndve {

struct Factor {
  std::string column;
  std::optional<double> level;  // set for indicator factors

  bool operator==(const Factor&) const = default;
};

struct Term {
  std::vector<Factor> factors;  // empty: intercept

  std::string label() const;
  static Term parse(const std::string& text);

  bool operator==(const Term&) const = default;
};

class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<Term> terms) : terms_(std::move(terms)) {}

  static FeatureMap parse(const std::vector<std::string>& specs);

  Eigen::Index dim() const { return static_cast<Eigen::Index>(terms_.size()); }
  const std::vector<Term>& terms() const { return terms_; }
  std::vector<std::string> labels() const;

  /// Evaluates every term for every record (n x dim). If `treatment` is set,
  /// the treatment column is replaced by that constant.
  Eigen::MatrixXd design(const TndSample& sample, std::optional<int> treatment = std::nullopt) const;

  /// Evaluates the map on a single record.
  Eigen::VectorXd evaluate(const TndRecord& record, const VariableRoles& roles,
                           std::optional<int> treatment = std::nullopt) const;

  bool references(const std::string& column) const;

  /// Throws ConfigError unless every referenced column is one of `allowed`.
  void require_columns_in(const std::vector<std::string>& allowed, const std::string& what) const;

  bool operator==(const FeatureMap&) const = default;

 private:
  std::vector<Term> terms_;
};

/// Terms expanding the named columns: numeric columns enter as-is; columns
/// listed as categorical (or all columns when `force_categorical`) become
/// indicators of every observed level except the first (reference) level.
std::vector<Term> expand_columns(const TndSample& sample, const std::vector<std::string>& columns,
                                 bool force_categorical = false);

/// Term multiplying `t` by the treatment column.
Term times_treatment(const Term& t, const VariableRoles& roles);

/// (1, X...) with categorical covariates one-hot coded.
FeatureMap covariate_features(const TndSample& sample, bool intercept = true);

}  // namespace tndve
