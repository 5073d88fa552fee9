#include "tndve/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "tndve/error.hpp"
#include "tndve/textio.hpp"

namespace tndve {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_level(const std::string& text, const std::string& term) {
  double v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw ConfigError("feature term '" + term + "': bad level '" + text + "'");
  return v;
}

}  // namespace

std::string Term::label() const {
  if (factors.empty()) return "1";
  std::string out;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i) out += '*';
    out += factors[i].column;
    if (factors[i].level) out += "==" + format_double(*factors[i].level);
  }
  return out;
}

Term Term::parse(const std::string& text) {
  const std::string body = trim(text);
  if (body.empty()) throw ConfigError("empty feature term");
  if (body == "1") return Term{};
  Term t;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto star = body.find('*', start);
    if (star == std::string::npos) star = body.size();
    const std::string piece = trim(body.substr(start, star - start));
    if (piece.empty()) throw ConfigError("feature term '" + body + "' has an empty factor");
    if (piece == "1") throw ConfigError("feature term '" + body + "': '1' must stand alone");
    const auto eq = piece.find("==");
    if (eq == std::string::npos) {
      t.factors.push_back({piece, std::nullopt});
    } else {
      const std::string col = trim(piece.substr(0, eq));
      if (col.empty()) throw ConfigError("feature term '" + body + "' has an empty column name");
      t.factors.push_back({col, parse_level(trim(piece.substr(eq + 2)), body)});
    }
    start = star + 1;
  }
  return t;
}

FeatureMap FeatureMap::parse(const std::vector<std::string>& specs) {
  std::vector<Term> terms;
  terms.reserve(specs.size());
  for (const auto& s : specs) terms.push_back(Term::parse(s));
  return FeatureMap(std::move(terms));
}

std::vector<std::string> FeatureMap::labels() const {
  std::vector<std::string> out;
  for (const auto& t : terms_) out.push_back(t.label());
  return out;
}

Eigen::MatrixXd FeatureMap::design(const TndSample& sample, std::optional<int> treatment) const {
  const Eigen::Index n = sample.n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(n, dim());
  for (Eigen::Index k = 0; k < dim(); ++k) {
    for (const auto& f : terms_[static_cast<std::size_t>(k)].factors) {
      const auto ref = sample.find(f.column);
      if (!ref)
        throw SchemaError("feature " + terms_[static_cast<std::size_t>(k)].label() +
                          ": column " + f.column + " not found in sample roles");
      Eigen::VectorXd col;
      if (ref->role == RoleKind::treatment && treatment) {
        col = Eigen::VectorXd::Constant(n, static_cast<double>(*treatment));
      } else if (ref->role == RoleKind::outcome) {
        throw ConfigError("feature " + terms_[static_cast<std::size_t>(k)].label() +
                          " may not reference the outcome column");
      } else {
        col = sample.column(f.column);
      }
      if (f.level) {
        const double level = *f.level;
        out.col(k).array() *= (col.array() == level).cast<double>();
      } else {
        out.col(k).array() *= col.array();
      }
    }
  }
  return out;
}

Eigen::VectorXd FeatureMap::evaluate(const TndRecord& r, const VariableRoles& roles,
                                     std::optional<int> treatment) const {
  auto value_of = [&](const std::string& name) -> double {
    if (name == roles.treatment) return treatment ? *treatment : r.a;
    if (name == roles.outcome) throw ConfigError("features may not reference the outcome column");
    auto pick = [&](const std::vector<std::string>& cols,
                    const std::vector<double>& vals) -> std::optional<double> {
      auto it = std::find(cols.begin(), cols.end(), name);
      if (it == cols.end()) return std::nullopt;
      const auto j = static_cast<std::size_t>(it - cols.begin());
      if (j >= vals.size()) throw DomainError("record has no value for column " + name);
      return vals[j];
    };
    if (auto v = pick(roles.nce, r.z)) return *v;
    if (auto v = pick(roles.nco, r.w)) return *v;
    if (auto v = pick(roles.covariates, r.x)) return *v;
    throw SchemaError("column " + name + " not found in roles");
  };
  Eigen::VectorXd out = Eigen::VectorXd::Ones(dim());
  for (Eigen::Index k = 0; k < dim(); ++k)
    for (const auto& f : terms_[static_cast<std::size_t>(k)].factors) {
      const double v = value_of(f.column);
      out(k) *= f.level ? (v == *f.level ? 1.0 : 0.0) : v;
    }
  return out;
}

bool FeatureMap::references(const std::string& column) const {
  for (const auto& t : terms_)
    for (const auto& f : t.factors)
      if (f.column == column) return true;
  return false;
}

void FeatureMap::require_columns_in(const std::vector<std::string>& allowed,
                                    const std::string& what) const {
  for (const auto& t : terms_)
    for (const auto& f : t.factors)
      if (std::find(allowed.begin(), allowed.end(), f.column) == allowed.end())
        throw ConfigError(what + ": term " + t.label() + " references column " + f.column +
                          ", which is not allowed here");
}

std::vector<Term> expand_columns(const TndSample& sample, const std::vector<std::string>& columns,
                                 bool force_categorical) {
  std::vector<Term> out;
  for (const auto& c : columns) {
    if (force_categorical || sample.roles().is_categorical(c)) {
      const auto levels = sample.levels(c);
      for (std::size_t l = 1; l < levels.size(); ++l) out.push_back(Term{{Factor{c, levels[l]}}});
    } else {
      out.push_back(Term{{Factor{c, std::nullopt}}});
    }
  }
  return out;
}

Term times_treatment(const Term& t, const VariableRoles& roles) {
  Term out;
  out.factors.push_back({roles.treatment, std::nullopt});
  out.factors.insert(out.factors.end(), t.factors.begin(), t.factors.end());
  return out;
}

FeatureMap covariate_features(const TndSample& sample, bool intercept) {
  std::vector<Term> terms;
  if (intercept) terms.push_back(Term{});
  const auto xs = expand_columns(sample, sample.roles().covariates);
  terms.insert(terms.end(), xs.begin(), xs.end());
  return FeatureMap(std::move(terms));
}

}  // namespace tndve
