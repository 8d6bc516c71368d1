#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>
#include <unistd.h>

#include "svasr/acoustic.hpp"
#include "svasr/decoder.hpp"
#include "svasr/lingua.hpp"
#include "svasr/util.hpp"

namespace svasr::test {

inline std::filesystem::path data_dir() { return SVASR_DATA_DIR; }

inline std::string fig2_grammar() { return read_text_file(data_dir() / "idswitch.grammar"); }
inline Lexicon idswitch_lexicon() { return parse_lexicon(read_text_file(data_dir() / "idswitch.dict")); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("svasr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Deterministic generator shared by the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  template <class C>
  const auto& pick(const C& items) {
    return items[std::size_t(integer(0, int(items.size()) - 1))];
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Random forward-only HMM: skips allowed, optional tee, 1..max_mix components per state.
inline Hmm random_hmm(Gen& gen, int max_states, int max_dim, int max_mix = 2, bool allow_tee = true,
                      Eigen::Index fixed_dim = 0) {
  const int n = gen.integer(1, max_states);
  const Eigen::Index dim = fixed_dim > 0 ? fixed_dim : gen.integer(1, max_dim);
  Hmm h;
  h.name = "h";
  for (int j = 0; j < n; ++j) {
    GmmStateD s;
    const int m = gen.integer(1, max_mix);
    double total = 0;
    for (int c = 0; c < m; ++c) {
      Eigen::VectorXd mean(dim), var(dim);
      for (Eigen::Index d = 0; d < dim; ++d) {
        mean[d] = gen.real(-2, 2);
        var[d] = gen.real(0.3, 2);
      }
      const double w = gen.real(0.1, 1);
      total += w;
      s.components.push_back({w, GaussianD(mean, var)});
    }
    for (auto& c : s.components) c.weight /= total;
    h.states.push_back(std::move(s));
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n + 2, n + 2);
  for (int i = 0; i <= n; ++i) {
    double total = 0;
    for (int j = std::max(i, 1); j <= n + 1; ++j) {
      if (i == 0 && j == n + 1 && !(allow_tee && gen.coin(0.3))) continue;
      p(i, j) = gen.coin(0.8) || j == n + 1 ? gen.real(0.05, 1) : 0.0;
      total += p(i, j);
    }
    if (total == 0) p(i, i == 0 ? 1 : n + 1) = total = 1;
    p.row(i) /= total;
  }
  h.log_trans = p.unaryExpr([](double v) { return safe_log(v); });
  return h;
}

inline Eigen::MatrixXd random_observations(Gen& gen, Eigen::Index dim, Eigen::Index frames) {
  Eigen::MatrixXd o(dim, frames);
  for (Eigen::Index i = 0; i < o.size(); ++i) o.data()[i] = gen.real(-3, 3);
  return o;
}

/// ln P(obs | h) summed over every entry-to-exit state path, enumerated one by one in long double.
inline long double brute_force_forward(const Hmm& h, const Eigen::MatrixXd& obs) {
  const int n = h.n_states();
  const Eigen::Index T = obs.cols();
  auto trans = [&](int i, int j) { return std::exp((long double)h.log_trans(i, j)); };
  auto emit = [&](int j, Eigen::Index t) {
    long double acc = 0;
    for (const auto& c : h.states[std::size_t(j)].components) {
      long double e = 0;
      for (Eigen::Index d = 0; d < obs.rows(); ++d) {
        const long double diff = obs(d, t) - c.gaussian.mean[d];
        const long double var = c.gaussian.variance[d];
        e += -0.5L * (std::log(2 * std::numbers::pi_v<long double>) + std::log(var)) - 0.5L * diff * diff / var;
      }
      acc += (long double)c.weight * std::exp(e);
    }
    return acc;
  };
  if (T == 0) return std::log(trans(0, n + 1));
  long double total = 0;
  std::vector<int> path(std::size_t(T), 0);
  while (true) {
    long double p = trans(0, path[0] + 1) * emit(path[0], 0);
    for (Eigen::Index t = 1; t < T; ++t)
      p *= trans(path[std::size_t(t - 1)] + 1, path[std::size_t(t)] + 1) * emit(path[std::size_t(t)], t);
    total += p * trans(path.back() + 1, n + 1);
    std::size_t k = 0;
    while (k < path.size() && ++path[k] == n) path[k++] = 0;
    if (k == path.size()) break;
  }
  return std::log(total);
}

/// Grammar over at most three words: a sequence of 1-3 items, each a word or a
/// bracketed alternation of 1-2 words.
inline std::string random_tiny_grammar(Gen& gen) {
  const std::vector<std::string> words{"a", "b", "c"};
  const std::vector<std::pair<std::string, std::string>> brackets{{"(", ")"}, {"[", "]"}, {"{", "}"}, {"<", ">"}};
  std::string top = "(";
  const int items = gen.integer(1, 3);
  for (int i = 0; i < items; ++i) {
    if (gen.coin(0.4)) {
      top += " " + gen.pick(words);
      continue;
    }
    const auto& [open, close] = gen.pick(brackets);
    top += " " + open + " " + gen.pick(words);
    if (gen.coin()) top += " | " + gen.pick(words);
    top += " " + close;
  }
  return top + " )";
}

/// Best joint log probability of obs through the concatenation of the given
/// models, by Viterbi over an explicitly unrolled chain with its own
/// non-emitting entry and exit per model.
inline double chain_viterbi(const std::vector<const Hmm*>& chain, const Eigen::MatrixXd& obs) {
  const double zero = kLogZero<double>;
  const std::size_t m_count = chain.size();
  std::vector<std::vector<double>> emit(m_count);
  for (std::size_t m = 0; m < m_count; ++m) emit[m].assign(std::size_t(chain[m]->n_states()), zero);
  // entry[m] doubles as exit[m - 1]; entry[m_count] is the chain exit.
  std::vector<double> entry(m_count + 1, zero);
  auto close_nulls = [&] {
    for (std::size_t m = 0; m < m_count; ++m) {
      const Hmm& h = *chain[m];
      const int n = h.n_states();
      double x = entry[m] + h.log_trans(0, n + 1);
      for (int i = 0; i < n; ++i) x = std::max(x, emit[m][std::size_t(i)] + h.log_trans(i + 1, n + 1));
      entry[m + 1] = std::max(entry[m + 1], x);
    }
  };
  entry[0] = 0.0;
  close_nulls();
  for (Eigen::Index t = 0; t < obs.cols(); ++t) {
    std::vector<std::vector<double>> next(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
      const Hmm& h = *chain[m];
      const int n = h.n_states();
      next[m].assign(std::size_t(n), zero);
      for (int j = 0; j < n; ++j) {
        double best = entry[m] + h.log_trans(0, j + 1);
        for (int i = 0; i < n; ++i) best = std::max(best, emit[m][std::size_t(i)] + h.log_trans(i + 1, j + 1));
        if (best > zero) next[m][std::size_t(j)] = best + log_emission(h.states[std::size_t(j)], obs.col(t));
      }
    }
    emit = std::move(next);
    std::fill(entry.begin(), entry.end(), zero);
    close_nulls();
  }
  return entry[m_count];
}

struct OracleResult {
  double score = kLogZero<double>;
  WordSequence words;
};

/// Best score of one sentence over every pronunciation choice.
inline double sentence_score(const WordSequence& sentence, const Lexicon& lex, const HmmSet& models,
                             const Eigen::MatrixXd& obs) {
  double best = kLogZero<double>;
  std::vector<const Hmm*> chain;
  std::function<void(std::size_t)> rec = [&](std::size_t w) {
    if (w == sentence.size()) {
      best = std::max(best, chain_viterbi(chain, obs));
      return;
    }
    for (const auto& pron : lex.pronunciations(sentence[w])) {
      const std::size_t mark = chain.size();
      for (const auto& p : pron) chain.push_back(&models.at(p));
      rec(w + 1);
      chain.resize(mark);
    }
  };
  rec(0);
  return best;
}

/// Exhaustive decode: every accepted sentence of at most max_words words, scored by sentence_score.
inline OracleResult oracle_decode(const WordNetwork& net, const Lexicon& lex, const HmmSet& models,
                                  const Eigen::MatrixXd& obs, std::size_t max_words) {
  OracleResult best;
  for (const auto& sentence : enumerate_sentences(net, max_words)) {
    const double s = sentence_score(sentence, lex, models, obs);
    if (s > best.score) best = {s, sentence};
  }
  return best;
}

/// Phones p, q, r (non-tee) and sp (tee) of one dimension; words a, b, c with 1-2
/// pronunciations each, every pronunciation holding at least one non-tee phone.
struct TinySystem {
  HmmSet models;
  Lexicon lexicon;
};

inline TinySystem random_tiny_system(Gen& gen, Eigen::Index dim) {
  TinySystem sys;
  for (const char* name : {"p", "q", "r"}) {
    Hmm h = random_hmm(gen, 3, 1, 2, false, dim);
    h.name = name;
    sys.models.add(std::move(h));
  }
  Hmm sp = make_left_to_right("sp", 1, dim, gen.real(0.1, 0.6));
  sp.states[0] = random_hmm(gen, 1, 1, 1, false, dim).states[0];
  sys.models.add(std::move(sp));
  const std::vector<std::string> phones{"p", "q", "r"};
  for (const char* word : {"a", "b", "c"}) {
    const int prons = gen.integer(1, 2);
    for (int k = 0; k < prons; ++k) {
      Pronunciation pron;
      const int len = gen.integer(1, 2);
      for (int i = 0; i < len; ++i) pron.push_back(gen.pick(phones));
      if (gen.coin(0.3)) pron.push_back("sp");
      sys.lexicon.add(word, pron);
    }
  }
  return sys;
}

}  // namespace svasr::test
