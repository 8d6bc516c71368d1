#include "svasr/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "svasr/util.hpp"

namespace svasr {

void TrainConfig::validate() const {
  if (max_init_iters <= 0 || max_bw_iters <= 0 || min_segments <= 0 || mixtures <= 0 ||
      states_per_phone <= 0)
    throw DomainError("training counts must be positive");
  if (!(converge_epsilon > 0.0)) throw DomainError("converge_epsilon must be positive");
  if (!(variance_floor_scale > 0.0)) throw DomainError("variance_floor_scale must be positive");
  if (!(tee_prob > 0.0 && tee_prob < 1.0)) throw DomainError("tee_prob must lie in (0, 1)");
}

// ---------------------------------------------------------------------------
// Corpus

std::pair<Eigen::Index, Eigen::Index> label_frames(const Label& l, std::int32_t period,
                                                   Eigen::Index n_frames) {
  const Eigen::Index begin = static_cast<Eigen::Index>(l.start / period);
  const Eigen::Index end = static_cast<Eigen::Index>(l.end / period);
  return {std::min(begin, n_frames), std::min(end, n_frames)};
}

void TrainingCorpus::add(Utterance u) {
  validate_labels(u.labels);
  if (u.features.frame_period_100ns <= 0) throw DomainError(u.id + ": invalid frame period");
  if (!utterances.empty() && u.features.dim() != dim())
    throw DomainError(u.id + ": feature dimension " + std::to_string(u.features.dim()) +
                      " differs from corpus dimension " + std::to_string(dim()));
  for (const auto& l : u.labels)
    if (l.start / u.features.frame_period_100ns >= u.features.size())
      throw DomainError(u.id + ": label '" + l.name + "' starts beyond the last frame");
  utterances.push_back(std::move(u));
}

bool TrainingCorpus::contains_digest(const std::string& digest) const {
  if (digest.empty()) return false;
  return std::any_of(utterances.begin(), utterances.end(),
                     [&](const Utterance& u) { return u.digest == digest; });
}

Eigen::Index TrainingCorpus::dim() const {
  return utterances.empty() ? 0 : utterances.front().features.dim();
}

std::vector<Eigen::MatrixXd> collect_segments(const TrainingCorpus& corpus, const std::string& phone,
                                              std::vector<std::string>* warnings) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& u : corpus.utterances) {
    for (const auto& l : u.labels) {
      if (l.name != phone) continue;
      auto [begin, end] = label_frames(l, u.features.frame_period_100ns, u.features.size());
      if (end <= begin) {
        if (warnings)
          warnings->push_back(u.id + ": label '" + phone + "' at " + std::to_string(l.start) +
                              " spans no frame, dropped");
        continue;
      }
      out.emplace_back(u.features.frames.middleCols(begin, end - begin));
    }
  }
  return out;
}

Eigen::VectorXd variance_floor(std::span<const Eigen::MatrixXd> blocks, double scale) {
  Eigen::Index dim = blocks.empty() ? 0 : blocks.front().rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sum_sq = Eigen::VectorXd::Zero(dim);
  double n = 0;
  for (const auto& b : blocks) {
    sum += b.rowwise().sum();
    sum_sq += b.array().square().matrix().rowwise().sum();
    n += double(b.cols());
  }
  if (n < 1) throw DomainError("no frames to compute a variance floor from");
  const Eigen::VectorXd mean = sum / n;
  Eigen::VectorXd var = (sum_sq / n - mean.cwiseAbs2()).cwiseMax(0.0);
  // Constant dimensions still need a positive floor.
  return (scale * var).cwiseMax(1e-12);
}

Eigen::VectorXd variance_floor(const TrainingCorpus& corpus, double scale) {
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& u : corpus.utterances) blocks.push_back(u.features.frames);
  return variance_floor(blocks, scale);
}

Topology topology_for(const std::string& phone, const TrainConfig& cfg) {
  if (cfg.tee_phones.count(phone)) return {phone, 1, cfg.tee_prob};
  return {phone, cfg.states_per_phone, 0.0};
}

// ---------------------------------------------------------------------------
// Initialisation

namespace {

using Assignment = std::vector<std::vector<int>>;

Eigen::MatrixXd log_of(const Eigen::MatrixXd& p) {
  return p.unaryExpr([](double v) { return safe_log(v); });
}

/// Entry row for a model: the tee probability is held fixed and the rest is spread by counts.
void set_entry_row(Eigen::MatrixXd& prob, const Eigen::VectorXd& entry_counts, double tee_prob) {
  const int n = int(entry_counts.size());
  const double total = entry_counts.sum();
  for (int j = 0; j < n; ++j) prob(0, j + 1) = total > 0 ? (1.0 - tee_prob) * entry_counts[j] / total : 0.0;
  if (total <= 0) prob(0, 1) = 1.0 - tee_prob;
  prob(0, n + 1) = tee_prob;
}

}  // namespace

Hmm init_uniform(std::span<const Eigen::MatrixXd> segments, const Topology& topo, const TrainConfig& cfg,
                 const Eigen::VectorXd& var_floor, int* iterations) {
  cfg.validate();
  const int n = topo.n_states;
  if (segments.size() < std::size_t(cfg.min_segments))
    throw TrainingError("phone " + topo.name + ": " + std::to_string(segments.size()) +
                        " segments, need at least " + std::to_string(cfg.min_segments));
  const Eigen::Index dim = segments.front().rows();
  for (const auto& s : segments) {
    if (s.rows() != dim) throw TrainingError("phone " + topo.name + ": segments differ in dimension");
    if (s.cols() < n && topo.tee_prob <= 0.0)
      throw TrainingError("phone " + topo.name + ": segment of " + std::to_string(s.cols()) +
                          " frames is shorter than the " + std::to_string(n) + "-state model");
    if (s.cols() == 0) throw TrainingError("phone " + topo.name + ": empty segment");
  }
  if (var_floor.size() != dim) throw DomainError("variance floor dimension mismatch");

  Hmm h = make_left_to_right<double>(topo.name, n, dim, topo.tee_prob);
  Assignment assign(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Eigen::Index len = segments[s].cols();
    assign[s].resize(std::size_t(len));
    for (Eigen::Index t = 0; t < len; ++t) assign[s][std::size_t(t)] = int(t * n / len);
  }

  int iter = 0;
  for (;;) {
    ++iter;
    // Moments per state.
    std::vector<Eigen::VectorXd> sum(n, Eigen::VectorXd::Zero(dim)), sum_sq(n, Eigen::VectorXd::Zero(dim));
    std::vector<double> count(std::size_t(n), 0.0);
    Eigen::MatrixXd trans_counts = Eigen::MatrixXd::Zero(n + 2, n + 2);
    Eigen::VectorXd entry_counts = Eigen::VectorXd::Zero(n);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& path = assign[s];
      for (std::size_t t = 0; t < path.size(); ++t) {
        const int j = path[t];
        const auto x = segments[s].col(Eigen::Index(t));
        sum[j] += x;
        sum_sq[j] += x.cwiseAbs2();
        count[std::size_t(j)] += 1.0;
        if (t + 1 < path.size()) trans_counts(j + 1, path[t + 1] + 1) += 1.0;
      }
      entry_counts[path.front()] += 1.0;
      trans_counts(path.back() + 1, n + 1) += 1.0;
    }
    for (int j = 0; j < n; ++j) {
      if (count[std::size_t(j)] == 0) continue;
      const Eigen::VectorXd mean = sum[j] / count[std::size_t(j)];
      const Eigen::VectorXd var =
          (sum_sq[j] / count[std::size_t(j)] - mean.cwiseAbs2()).cwiseMax(var_floor);
      h.states[std::size_t(j)].components = {{1.0, GaussianD(mean, var)}};
    }
    Eigen::MatrixXd prob = h.log_trans.unaryExpr([](double v) { return std::exp(v); });
    set_entry_row(prob, entry_counts, topo.tee_prob);
    for (int i = 1; i <= n; ++i) {
      const double total = trans_counts.row(i).sum();
      if (total > 0) prob.row(i) = trans_counts.row(i) / total;
    }
    h.log_trans = log_of(prob);

    if (iter >= cfg.max_init_iters) break;
    Assignment next(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
      auto a = viterbi_align(h, segments[s]);
      if (a.states.empty())
        throw TrainingError("phone " + topo.name + ": segment " + std::to_string(s) +
                            " has no admissible alignment");
      next[s] = std::move(a.states);
    }
    if (next == assign) break;
    assign = std::move(next);
  }
  if (iterations) *iterations = iter;
  return h;
}

// ---------------------------------------------------------------------------
// Baum-Welch

ReestimateResult reestimate_baum_welch(const Hmm& h, std::span<const Eigen::MatrixXd> segments,
                                       const TrainConfig& cfg, const Eigen::VectorXd& var_floor) {
  const int n = h.n_states();
  const Eigen::Index dim = h.dim();
  if (var_floor.size() != dim) throw DomainError("variance floor dimension mismatch");

  struct StateAcc {
    std::vector<double> occ;
    std::vector<Eigen::VectorXd> sum, sum_sq;
  };
  std::vector<StateAcc> acc(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const std::size_t m = h.states[std::size_t(j)].components.size();
    acc[std::size_t(j)].occ.assign(m, 0.0);
    acc[std::size_t(j)].sum.assign(m, Eigen::VectorXd::Zero(dim));
    acc[std::size_t(j)].sum_sq.assign(m, Eigen::VectorXd::Zero(dim));
  }
  Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(n + 2, n + 2);
  const auto& a = h.log_trans;

  ReestimateResult result;
  result.log_likelihood = 0.0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Eigen::MatrixXd& obs = segments[s];
    if (obs.rows() != dim) throw DomainError("segment dimension does not match model " + h.name);
    const Eigen::Index T = obs.cols();
    const Eigen::MatrixXd b = emission_table(h, obs);
    const auto fwd = forward_table(h, b);
    const auto bwd = backward_table(h, b);
    const double p = fwd.total;
    if (p == kLogZero<double>)
      throw TrainingError("phone " + h.name + ": segment " + std::to_string(s) + " has no admissible path");
    result.log_likelihood += p;
    if (T == 0) {
      trans(0, n + 1) += 1.0;
      continue;
    }

    for (int j = 0; j < n; ++j) {
      auto& st = acc[std::size_t(j)];
      const auto& comps = h.states[std::size_t(j)].components;
      for (Eigen::Index t = 0; t < T; ++t) {
        const double gamma = std::exp(fwd.values(j, t) + bwd.values(j, t) - p);
        if (gamma == 0.0) continue;
        const auto x = obs.col(t);
        for (std::size_t m = 0; m < comps.size(); ++m) {
          const double share =
              comps.size() == 1
                  ? 1.0
                  : std::exp(safe_log(comps[m].weight) + log_gauss(comps[m].gaussian, x) - b(j, t));
          const double g = gamma * share;
          st.occ[m] += g;
          st.sum[m] += g * x;
          st.sum_sq[m] += g * x.cwiseAbs2();
        }
      }
      trans(0, j + 1) += std::exp(a(0, j + 1) + b(j, 0) + bwd.values(j, 0) - p);
      trans(j + 1, n + 1) += std::exp(fwd.values(j, T - 1) + a(j + 1, n + 1) - p);
      for (int k = 0; k < n; ++k) {
        if (a(j + 1, k + 1) == kLogZero<double>) continue;
        double xi = 0.0;
        for (Eigen::Index t = 0; t + 1 < T; ++t)
          xi += std::exp(fwd.values(j, t) + a(j + 1, k + 1) + b(k, t + 1) + bwd.values(k, t + 1) - p);
        trans(j + 1, k + 1) += xi;
      }
    }
  }

  Hmm out = h;
  for (int j = 0; j < n; ++j) {
    auto& st = acc[std::size_t(j)];
    auto& comps = out.states[std::size_t(j)].components;
    double total = 0.0;
    for (double o : st.occ) total += o;
    if (!(total > 0.0)) {
      result.warnings.push_back("model " + h.name + ": state " + std::to_string(j + 1) +
                                " has zero occupancy, left unchanged");
      continue;
    }
    for (std::size_t m = 0; m < comps.size(); ++m) {
      const double occ = st.occ[m];
      if (!(occ > 1e-10 * total)) {
        result.warnings.push_back("model " + h.name + ": state " + std::to_string(j + 1) + " component " +
                                  std::to_string(m + 1) + " has negligible occupancy");
        comps[m].weight = 1e-10;
        continue;
      }
      comps[m].weight = occ / total;
      auto& g = comps[m].gaussian;
      g.mean = st.sum[m] / occ;
      if (!cfg.fixed_variance) {
        g.variance = (st.sum_sq[m] / occ - g.mean.cwiseAbs2()).cwiseMax(var_floor);
        g.update_norm();
      }
    }
    double wsum = 0.0;
    for (const auto& c : comps) wsum += c.weight;
    for (auto& c : comps) c.weight /= wsum;
  }

  Eigen::MatrixXd prob = h.log_trans.unaryExpr([](double v) { return std::exp(v); });
  const double tee = prob(0, n + 1);
  if (trans.row(0).head(n + 1).sum() > 0.0) set_entry_row(prob, trans.row(0).segment(1, n).transpose(), tee);
  for (int i = 1; i <= n; ++i) {
    const double total = trans.row(i).sum();
    if (total > 0.0) prob.row(i) = trans.row(i) / total;
  }
  out.log_trans = log_of(prob);
  result.model = std::move(out);
  return result;
}

Hmm split_heaviest_components(const Hmm& h) {
  Hmm out = h;
  for (auto& state : out.states) {
    auto& comps = state.components;
    std::size_t heaviest = 0;
    for (std::size_t m = 1; m < comps.size(); ++m)
      if (comps[m].weight > comps[heaviest].weight) heaviest = m;
    MixtureComponent<double> twin = comps[heaviest];
    const Eigen::VectorXd offset = 0.2 * twin.gaussian.variance.cwiseSqrt();
    comps[heaviest].weight *= 0.5;
    comps[heaviest].gaussian.mean += offset;
    twin.weight *= 0.5;
    twin.gaussian.mean -= offset;
    comps.push_back(std::move(twin));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Runs Baum-Welch until the relative improvement drops below epsilon.
Hmm reestimate_until_converged(Hmm h, std::span<const Eigen::MatrixXd> segments, const TrainConfig& cfg,
                               const Eigen::VectorXd& var_floor, std::vector<double>& history,
                               std::vector<std::string>& warnings) {
  double previous = kLogZero<double>;
  for (int iter = 0; iter < cfg.max_bw_iters; ++iter) {
    auto r = reestimate_baum_welch(h, segments, cfg, var_floor);
    history.push_back(r.log_likelihood);
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    h = std::move(r.model);
    if (previous != kLogZero<double> &&
        (r.log_likelihood - previous) <= cfg.converge_epsilon * std::abs(previous))
      break;
    previous = r.log_likelihood;
  }
  return h;
}

}  // namespace

TrainReport train_all(const TrainingCorpus& corpus, const Lexicon& lexicon, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.utterances.empty()) throw TrainingError("training corpus is empty");
  TrainReport report;
  const auto inventory = phone_inventory(lexicon);

  std::map<std::string, std::vector<Eigen::MatrixXd>> segments;
  std::string deficient;
  for (const auto& phone : inventory) {
    auto segs = collect_segments(corpus, phone, &report.warnings);
    if (segs.size() < std::size_t(cfg.min_segments))
      deficient += (deficient.empty() ? "" : ", ") + phone + " (" + std::to_string(segs.size()) + ")";
    segments[phone] = std::move(segs);
  }
  if (!deficient.empty())
    throw TrainingError("too few training segments for phones: " + deficient);

  const Eigen::VectorXd floor = variance_floor(corpus, cfg.variance_floor_scale);
  report.models.dim = corpus.dim();
  for (const auto& phone : inventory) {
    const auto& segs = segments[phone];
    auto& history = report.log_likelihoods[phone];
    Hmm h = init_uniform(segs, topology_for(phone, cfg), cfg, floor);
    h = reestimate_until_converged(std::move(h), segs, cfg, floor, history, report.warnings);
    while (int(h.states.front().components.size()) < cfg.mixtures) {
      h = split_heaviest_components(h);
      h = reestimate_until_converged(std::move(h), segs, cfg, floor, history, report.warnings);
    }
    report.models.add(std::move(h));
  }
  return report;
}

// ---------------------------------------------------------------------------

TrainingCorpus read_corpus_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  const auto base = path.parent_path();
  TrainingCorpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 2)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected '<features> <labels>'");
    const auto feat_path = base / tokens[0];
    Utterance u;
    u.id = feat_path.stem().string();
    u.features = read_param_file(feat_path);
    u.labels = read_labels(base / tokens[1]);
    if (tokens.size() > 2) u.digest = tokens[2];
    corpus.add(std::move(u));
  }
  return corpus;
}

void write_corpus_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  for (const auto& e : entries) {
    out << e.features.generic_string() << ' ' << e.labels.generic_string();
    if (!e.digest.empty()) out << ' ' << e.digest;
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace svasr
