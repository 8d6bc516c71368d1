#include "svasr/acoustic.hpp"

#include <cstdio>
#include <sstream>

#include "svasr/util.hpp"

namespace svasr {

void check_model(const Hmm& h, double tolerance) {
  const int n = h.n_states();
  const auto fail = [&](const std::string& why) { return DomainError("model " + h.name + ": " + why); };
  if (n < 1) throw fail("no emitting states");
  if (h.log_trans.rows() != n + 2 || h.log_trans.cols() != n + 2) throw fail("transition matrix size");
  for (int i = 0; i <= n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n + 2; ++j) {
      const double lp = h.log_trans(i, j);
      if (lp > 0.0 || std::isnan(lp)) throw fail("transition log-probability out of range");
      if (j < i && lp != kLogZero<double>) throw fail("backward transition");
      if (j == 0 && lp != kLogZero<double>) throw fail("transition into the entry state");
      sum += std::exp(lp);
    }
    if (std::abs(sum - 1.0) > tolerance) throw fail("transition row " + std::to_string(i) + " does not sum to 1");
  }
  for (int j = 0; j < n + 2; ++j)
    if (h.log_trans(n + 1, j) != kLogZero<double>) throw fail("exit state has outgoing transitions");
  for (const auto& s : h.states) {
    if (s.components.empty()) throw fail("state without mixture components");
    double sum = 0.0;
    for (const auto& c : s.components) {
      if (!(c.weight > 0.0)) throw fail("non-positive mixture weight");
      if (c.gaussian.dim() != h.dim() || c.gaussian.variance.size() != h.dim())
        throw fail("inconsistent Gaussian dimension");
      if (!(c.gaussian.variance.array() > 0.0).all()) throw fail("non-positive variance");
      sum += c.weight;
    }
    if (std::abs(sum - 1.0) > tolerance) throw fail("mixture weights do not sum to 1");
  }
}

const Hmm& HmmSet::at(const std::string& phone) const {
  auto it = models.find(phone);
  if (it == models.end()) throw DomainError("no model for phone '" + phone + "'");
  return it->second;
}

void HmmSet::add(Hmm h) {
  if (models.empty() && dim == 0) dim = h.dim();
  if (h.dim() != dim)
    throw DomainError("model " + h.name + " has dimension " + std::to_string(h.dim()) +
                      ", set has " + std::to_string(dim));
  std::string name = h.name;
  models.insert_or_assign(std::move(name), std::move(h));
}

void require_phones(const HmmSet& set, const std::vector<std::string>& phones) {
  std::string missing;
  for (const auto& p : phones)
    if (!set.contains(p)) missing += (missing.empty() ? "" : ", ") + p;
  if (!missing.empty()) throw DomainError("model set lacks phones: " + missing);
}

namespace {

std::string num(double v) {
  if (v == kLogZero<double>) return "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& tok) {
  if (tok == "-inf") return kLogZero<double>;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != tok.size()) throw FormatError("hmmset: bad number '" + tok + "'");
  return v;
}

}  // namespace

std::string format_hmmset(const HmmSet& set) {
  std::ostringstream out;
  out << "hmmset dim " << set.dim << " models " << set.models.size() << '\n';
  for (const auto& [name, h] : set.models) {
    out << "model " << name << " states " << h.n_states() << '\n';
    for (int j = 0; j < h.n_states(); ++j) {
      const auto& s = h.states[std::size_t(j)];
      out << "state " << j + 1 << " mixtures " << s.components.size() << '\n';
      for (std::size_t m = 0; m < s.components.size(); ++m) {
        const auto& c = s.components[m];
        out << "component " << m + 1 << ' ' << num(c.weight) << "\nmean";
        for (double v : c.gaussian.mean) out << ' ' << num(v);
        out << "\nvariance";
        for (double v : c.gaussian.variance) out << ' ' << num(v);
        out << '\n';
      }
    }
    out << "transitions " << h.log_trans.rows() << '\n';
    for (Eigen::Index i = 0; i < h.log_trans.rows(); ++i) {
      for (Eigen::Index j = 0; j < h.log_trans.cols(); ++j) out << (j ? " " : "") << num(h.log_trans(i, j));
      out << '\n';
    }
    out << "end\n";
  }
  return out.str();
}

namespace {

class HmmReader {
 public:
  explicit HmmReader(const std::string& text) : in_(text) {}

  std::string word() {
    std::string tok;
    if (!(in_ >> tok)) throw FormatError("hmmset: unexpected end of file");
    return tok;
  }
  void expect(const std::string& tag) {
    auto tok = word();
    if (tok != tag) throw FormatError("hmmset: expected '" + tag + "' but found '" + tok + "'");
  }
  long count() {
    auto tok = word();
    try {
      std::size_t used = 0;
      long v = std::stol(tok, &used);
      if (used == tok.size() && v >= 0) return v;
    } catch (const std::logic_error&) {
    }
    throw FormatError("hmmset: bad count '" + tok + "'");
  }
  double number() { return parse_num(word()); }
  bool at_end() {
    in_ >> std::ws;
    return in_.eof();
  }

 private:
  std::istringstream in_;
};

}  // namespace

HmmSet parse_hmmset(const std::string& text) {
  HmmReader r(text);
  r.expect("hmmset");
  r.expect("dim");
  const long dim = r.count();
  r.expect("models");
  const long n_models = r.count();
  HmmSet set;
  set.dim = dim;
  for (long k = 0; k < n_models; ++k) {
    Hmm h;
    r.expect("model");
    h.name = r.word();
    r.expect("states");
    const long n = r.count();
    if (n < 1) throw FormatError("hmmset: model " + h.name + " has no states");
    for (long j = 0; j < n; ++j) {
      r.expect("state");
      if (r.count() != j + 1) throw FormatError("hmmset: states out of order in " + h.name);
      r.expect("mixtures");
      const long m = r.count();
      GmmStateD state;
      for (long c = 0; c < m; ++c) {
        r.expect("component");
        if (r.count() != c + 1) throw FormatError("hmmset: components out of order in " + h.name);
        MixtureComponent<double> comp;
        comp.weight = r.number();
        Eigen::VectorXd mean(dim), var(dim);
        r.expect("mean");
        for (long d = 0; d < dim; ++d) mean[d] = r.number();
        r.expect("variance");
        for (long d = 0; d < dim; ++d) var[d] = r.number();
        comp.gaussian = GaussianD(std::move(mean), std::move(var));
        state.components.push_back(std::move(comp));
      }
      h.states.push_back(std::move(state));
    }
    r.expect("transitions");
    const long size = r.count();
    if (size != n + 2) throw FormatError("hmmset: transition matrix of " + h.name + " has wrong size");
    h.log_trans.resize(size, size);
    for (long i = 0; i < size; ++i)
      for (long j = 0; j < size; ++j) h.log_trans(i, j) = r.number();
    r.expect("end");
    check_model(h);
    if (set.contains(h.name)) throw FormatError("hmmset: duplicate model " + h.name);
    set.add(std::move(h));
  }
  if (!r.at_end()) throw FormatError("hmmset: trailing data after last model");
  return set;
}

void write_hmmset(const HmmSet& set, const std::filesystem::path& path) {
  write_text_file(path, format_hmmset(set));
}

HmmSet read_hmmset(const std::filesystem::path& path) {
  try {
    return parse_hmmset(read_text_file(path));
  } catch (const DomainError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace svasr
