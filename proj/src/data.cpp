#include "tndve/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tndve/error.hpp"
#include "tndve/textio.hpp"

namespace tndve {

// ---------------------------------------------------------------------------
// VariableRoles

void VariableRoles::check() const {
  if (treatment.empty()) throw ConfigError("roles: treatment column not set");
  if (outcome.empty()) throw ConfigError("roles: outcome column not set");
  if (nce.empty()) throw ConfigError("roles: at least one NCE column is required");
  if (nco.empty()) throw ConfigError("roles: at least one NCO column is required");
  std::set<std::string> seen;
  auto claim = [&seen](const std::string& name) {
    if (name.empty()) throw ConfigError("roles: empty column name");
    if (!seen.insert(name).second)
      throw ConfigError("roles: column " + name + " is assigned to more than one role");
  };
  claim(treatment);
  claim(outcome);
  for (const auto& c : nce) claim(c);
  for (const auto& c : nco) claim(c);
  for (const auto& c : covariates) claim(c);
  for (const auto& c : categorical) {
    if (!seen.count(c) || c == treatment || c == outcome)
      throw ConfigError("roles: categorical column " + c + " is not an NCE, NCO or covariate");
  }
}

bool VariableRoles::is_categorical(const std::string& column) const {
  return std::find(categorical.begin(), categorical.end(), column) != categorical.end();
}

VariableRoles VariableRoles::from_config(const ConfigDocument& doc) {
  const std::string prefix = doc.has_table("roles") ? "roles." : "";
  VariableRoles r;
  r.treatment = doc.get_string(prefix + "treatment").value_or("");
  r.outcome = doc.get_string(prefix + "outcome").value_or("");
  r.nce = doc.get_string_list(prefix + "nce").value_or(std::vector<std::string>{});
  r.nco = doc.get_string_list(prefix + "nco").value_or(std::vector<std::string>{});
  r.covariates = doc.get_string_list(prefix + "covariates").value_or(std::vector<std::string>{});
  r.categorical = doc.get_string_list(prefix + "categorical").value_or(std::vector<std::string>{});
  r.check();
  return r;
}

// ---------------------------------------------------------------------------
// TndSample

TndSample::TndSample(VariableRoles roles, Eigen::VectorXd a, Eigen::VectorXd y, Eigen::MatrixXd z,
                     Eigen::MatrixXd w, Eigen::MatrixXd x)
    : roles_(std::move(roles)),
      a_(std::move(a)),
      y_(std::move(y)),
      z_(std::move(z)),
      w_(std::move(w)),
      x_(std::move(x)) {
  roles_.check();
  const Eigen::Index n = a_.size();
  if (n < 1) throw SchemaError("sample must contain at least one record");
  if (y_.size() != n || z_.rows() != n || w_.rows() != n || x_.rows() != n)
    throw SchemaError("sample columns have inconsistent lengths");
  if (z_.cols() != static_cast<Eigen::Index>(roles_.nce.size()) ||
      w_.cols() != static_cast<Eigen::Index>(roles_.nco.size()) ||
      x_.cols() != static_cast<Eigen::Index>(roles_.covariates.size()))
    throw SchemaError("sample column counts do not match the role declaration");
  if (!a_.allFinite() || !y_.allFinite() || !z_.allFinite() || !w_.allFinite() || !x_.allFinite())
    throw SchemaError("sample contains non-finite values");
}

TndSample TndSample::from_records(VariableRoles roles, const std::vector<TndRecord>& records) {
  const auto n = static_cast<Eigen::Index>(records.size());
  const auto dz = static_cast<Eigen::Index>(roles.nce.size());
  const auto dw = static_cast<Eigen::Index>(roles.nco.size());
  const auto dx = static_cast<Eigen::Index>(roles.covariates.size());
  Eigen::VectorXd a(n), y(n);
  Eigen::MatrixXd z(n, dz), w(n, dw), x(n, dx);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.z.size()) != dz || static_cast<Eigen::Index>(r.w.size()) != dw ||
        static_cast<Eigen::Index>(r.x.size()) != dx)
      throw SchemaError("record " + std::to_string(i) + " does not match the role declaration");
    a(i) = r.a;
    y(i) = r.y;
    for (Eigen::Index j = 0; j < dz; ++j) z(i, j) = r.z[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < dw; ++j) w(i, j) = r.w[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < dx; ++j) x(i, j) = r.x[static_cast<std::size_t>(j)];
  }
  return TndSample(std::move(roles), std::move(a), std::move(y), std::move(z), std::move(w),
                   std::move(x));
}

TndRecord TndSample::record(Eigen::Index i) const {
  TndRecord r;
  r.a = static_cast<int>(a_(i));
  r.y = static_cast<int>(y_(i));
  r.z.resize(static_cast<std::size_t>(z_.cols()));
  for (Eigen::Index j = 0; j < z_.cols(); ++j) r.z[static_cast<std::size_t>(j)] = z_(i, j);
  r.w.resize(static_cast<std::size_t>(w_.cols()));
  for (Eigen::Index j = 0; j < w_.cols(); ++j) r.w[static_cast<std::size_t>(j)] = w_(i, j);
  r.x.resize(static_cast<std::size_t>(x_.cols()));
  for (Eigen::Index j = 0; j < x_.cols(); ++j) r.x[static_cast<std::size_t>(j)] = x_(i, j);
  return r;
}

std::optional<ColumnRef> TndSample::find(const std::string& name) const {
  if (name == roles_.treatment) return ColumnRef{RoleKind::treatment, 0};
  if (name == roles_.outcome) return ColumnRef{RoleKind::outcome, 0};
  auto locate = [&name](const std::vector<std::string>& cols) -> std::optional<Eigen::Index> {
    auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - cols.begin());
  };
  if (auto j = locate(roles_.nce)) return ColumnRef{RoleKind::nce, *j};
  if (auto j = locate(roles_.nco)) return ColumnRef{RoleKind::nco, *j};
  if (auto j = locate(roles_.covariates)) return ColumnRef{RoleKind::covariate, *j};
  return std::nullopt;
}

Eigen::VectorXd TndSample::column(const std::string& name) const {
  const auto ref = find(name);
  if (!ref) throw SchemaError("column " + name + " not found in sample roles");
  switch (ref->role) {
    case RoleKind::treatment: return a_;
    case RoleKind::outcome: return y_;
    case RoleKind::nce: return z_.col(ref->index);
    case RoleKind::nco: return w_.col(ref->index);
    case RoleKind::covariate: return x_.col(ref->index);
  }
  return {};
}

std::vector<double> TndSample::levels(const std::string& name) const {
  const Eigen::VectorXd col = column(name);
  std::vector<double> v(col.data(), col.data() + col.size());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

TndSample TndSample::with_flipped_treatment() const {
  Eigen::VectorXd flipped = Eigen::VectorXd::Ones(a_.size()) - a_;
  return TndSample(roles_, std::move(flipped), y_, z_, w_, x_);
}

// ---------------------------------------------------------------------------
// validate

namespace {

bool is_binary(const Eigen::VectorXd& v) {
  return (v.array() == 0.0 || v.array() == 1.0).all();
}

bool is_constant(const Eigen::VectorXd& v) {
  return v.size() == 0 || (v.array() == v(0)).all();
}

}  // namespace

std::vector<Finding> validate(const TndSample& s) {
  std::vector<Finding> out;
  const auto& roles = s.roles();
  const bool a_binary = is_binary(s.a());
  const bool y_binary = is_binary(s.y());
  if (!a_binary)
    out.push_back({Severity::fatal, "non-binary-treatment",
                   "treatment column " + roles.treatment + " is not coded 0/1"});
  if (!y_binary)
    out.push_back({Severity::fatal, "non-binary-outcome",
                   "outcome column " + roles.outcome + " is not coded 0/1"});
  if (a_binary && y_binary) {
    const double n_treated = s.a().sum();
    const double n = static_cast<double>(s.n());
    if (n_treated == 0.0)
      out.push_back({Severity::fatal, "no-vaccinated", "no vaccinated subjects"});
    if (n_treated == n)
      out.push_back({Severity::fatal, "no-unvaccinated", "no unvaccinated subjects"});
    const double cases_treated = s.a().dot(s.y());
    const double cases = s.y().sum();
    if (n_treated > 0.0 && cases_treated == 0.0)
      out.push_back({Severity::fatal, "no-vaccinated-cases", "no test-positive vaccinated subjects"});
    if (n_treated < n && cases - cases_treated == 0.0)
      out.push_back(
          {Severity::fatal, "no-unvaccinated-cases", "no test-positive unvaccinated subjects"});
    if (cases / n > kRareCaseFractionThreshold)
      out.push_back({Severity::warning, "case-fraction",
                     "case fraction " + format_fixed(cases / n, 4) +
                         " exceeds 0.2; the rare-infection approximation may be strained"});
  }
  for (Eigen::Index j = 0; j < s.z().cols(); ++j)
    if (is_constant(s.z().col(j)))
      out.push_back({Severity::warning, "constant-nce",
                     "NCE has no variation (column " + roles.nce[static_cast<std::size_t>(j)] + ")"});
  for (Eigen::Index j = 0; j < s.w().cols(); ++j)
    if (is_constant(s.w().col(j)))
      out.push_back({Severity::warning, "constant-nco",
                     "NCO has no variation (column " + roles.nco[static_cast<std::size_t>(j)] + ")"});
  return out;
}

bool has_fatal(const std::vector<Finding>& findings) {
  return std::any_of(findings.begin(), findings.end(),
                     [](const Finding& f) { return f.severity == Severity::fatal; });
}

void require_estimable(const TndSample& sample) {
  for (const auto& f : validate(sample))
    if (f.severity == Severity::fatal) throw DegenerateDataError(f.message);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i < line.size() && line[i] == '"') quoted = !quoted;
    if (i == line.size() || (line[i] == ',' && !quoted)) {
      std::string_view f = line.substr(start, i - start);
      while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
      while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
      if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
      out.push_back(f);
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

TndSample parse_csv(const std::string& text, const VariableRoles& roles, const std::string& source) {
  roles.check();
  std::string_view body = text;
  if (body.substr(0, 3) == "\xEF\xBB\xBF") body.remove_prefix(3);

  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    std::string_view line = body.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string_view::npos)
    lines.pop_back();
  if (lines.empty()) throw SchemaError(source + ": empty file");

  const auto header = split_fields(lines.front());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index.emplace(std::string(header[j]), j);
  auto locate = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw SchemaError(source + ": column " + name + " not found");
    return it->second;
  };

  std::vector<std::string> wanted{roles.treatment, roles.outcome};
  for (const auto* group : {&roles.nce, &roles.nco, &roles.covariates})
    wanted.insert(wanted.end(), group->begin(), group->end());
  std::vector<std::size_t> cols;
  for (const auto& name : wanted) cols.push_back(locate(name));

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  if (n == 0) throw SchemaError(source + ": no data rows");
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(wanted.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto fields = split_fields(lines[static_cast<std::size_t>(i) + 1]);
    const std::string row = "row " + std::to_string(i + 1);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] >= fields.size() || fields[cols[k]].empty())
        throw SchemaError(source + ": " + row + ": missing value in column " + wanted[k]);
      std::string_view f = fields[cols[k]];
      if (f.front() == '+') f.remove_prefix(1);
      double v = 0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v))
        throw SchemaError(source + ": " + row + ": non-numeric value '" +
                          std::string(fields[cols[k]]) + "' in column " + wanted[k]);
      const bool binary_col = k < 2;
      if (binary_col && v != 0.0 && v != 1.0)
        throw SchemaError(source + ": " + row + ": column " + wanted[k] + " must be 0 or 1");
      if (roles.is_categorical(wanted[k]) && v != std::floor(v))
        throw SchemaError(source + ": " + row + ": categorical column " + wanted[k] +
                          " must hold integer codes");
      values(i, static_cast<Eigen::Index>(k)) = v;
    }
  }

  const auto dz = static_cast<Eigen::Index>(roles.nce.size());
  const auto dw = static_cast<Eigen::Index>(roles.nco.size());
  const auto dx = static_cast<Eigen::Index>(roles.covariates.size());
  return TndSample(roles, values.col(0), values.col(1), values.middleCols(2, dz),
                   values.middleCols(2 + dz, dw), values.middleCols(2 + dz + dw, dx));
}

TndSample load_csv(const std::filesystem::path& path, const VariableRoles& roles) {
  if (!std::filesystem::exists(path)) throw IoError("data file not found: " + path.string());
  return parse_csv(read_file(path), roles, path.string());
}

namespace {

void append_value(std::string& out, double v) {
  if (v == std::floor(v) && std::fabs(v) < 9007199254740992.0) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
    out.append(buf, p);
  } else {
    out += format_double(v);
  }
}

}  // namespace

std::string to_csv(const TndSample& s) {
  const auto& r = s.roles();
  std::string out = r.treatment + "," + r.outcome;
  for (const auto* group : {&r.nce, &r.nco, &r.covariates})
    for (const auto& c : *group) out += "," + c;
  out += '\n';
  out.reserve(out.size() + static_cast<std::size_t>(s.n()) * 16);
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    append_value(out, s.a()(i));
    out += ',';
    append_value(out, s.y()(i));
    for (const auto* m : {&s.z(), &s.w(), &s.x()})
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        out += ',';
        append_value(out, (*m)(i, j));
      }
    out += '\n';
  }
  return out;
}

void write_csv(const TndSample& sample, const std::filesystem::path& path) {
  write_file_atomic(path, to_csv(sample));
}

}  // namespace tndve
