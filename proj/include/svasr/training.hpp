#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svasr/acoustic.hpp"
#include "svasr/features.hpp"
#include "svasr/labels.hpp"
#include "svasr/lingua.hpp"

namespace svasr {

inline const std::string kShortPause = "sp";

struct TrainConfig {
  int max_init_iters = 20;
  int max_bw_iters = 20;
  /// Relative log-likelihood change that ends re-estimation.
  double converge_epsilon = 1e-4;
  /// Variance floor as a fraction of the global per-dimension variance.
  double variance_floor_scale = 1e-4;
  /// Keep variances frozen during Baum-Welch.
  bool fixed_variance = false;
  int min_segments = 3;
  int mixtures = 1;
  int states_per_phone = 3;
  /// Phones trained as one-state tee models, and their entry-to-exit probability.
  std::set<std::string> tee_phones{kShortPause};
  double tee_prob = 0.3;

  void validate() const;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct Utterance {
  std::string id;
  FeatureSequence features;
  LabelSequence labels;
  /// Identifies the source recording; used to avoid adding an utterance twice.
  std::string digest;
};

/// Label spans are clipped to the frames actually present, since the last
/// partial analysis window never yields a frame.
struct TrainingCorpus {
  std::vector<Utterance> utterances;

  /// Validates the labels and their placement before appending.
  void add(Utterance u);
  bool contains_digest(const std::string& digest) const;
  Eigen::Index dim() const;
};

/// Half-open frame span [floor(start/period), floor(end/period)), clipped to n_frames.
std::pair<Eigen::Index, Eigen::Index> label_frames(const Label& l, std::int32_t period,
                                                   Eigen::Index n_frames);

/// Feature blocks (dim x length) of every label carrying the phone. Labels
/// shorter than a frame are dropped and reported through warnings.
std::vector<Eigen::MatrixXd> collect_segments(const TrainingCorpus& corpus, const std::string& phone,
                                              std::vector<std::string>* warnings = nullptr);

/// scale * per-dimension variance of all frames in the blocks.
Eigen::VectorXd variance_floor(std::span<const Eigen::MatrixXd> blocks, double scale);
Eigen::VectorXd variance_floor(const TrainingCorpus& corpus, double scale);

struct Topology {
  std::string name;
  int n_states = 3;
  double tee_prob = 0.0;
};

Topology topology_for(const std::string& phone, const TrainConfig& cfg);

/// Uniform segmentation followed by Viterbi re-segmentation until the
/// state assignment stops changing. Each pass re-estimates single-Gaussian
/// states from their frames and transitions from the state run lengths.
Hmm init_uniform(std::span<const Eigen::MatrixXd> segments, const Topology& topo,
                 const TrainConfig& cfg, const Eigen::VectorXd& var_floor,
                 int* iterations = nullptr);

struct ReestimateResult {
  Hmm model;
  /// Total log-likelihood of the segments under the input model.
  double log_likelihood = 0.0;
  std::vector<std::string> warnings;
};

/// One Baum-Welch pass over isolated segments.
ReestimateResult reestimate_baum_welch(const Hmm& h, std::span<const Eigen::MatrixXd> segments,
                                       const TrainConfig& cfg, const Eigen::VectorXd& var_floor);

/// Splits the heaviest component of every state, perturbing means by +-0.2 sigma.
Hmm split_heaviest_components(const Hmm& h);

struct TrainReport {
  HmmSet models;
  /// Per phone, the log-likelihood reported by each Baum-Welch pass.
  std::map<std::string, std::vector<double>> log_likelihoods;
  std::vector<std::string> warnings;
};

/// Initialisation then Baum-Welch for every phone of the lexicon.
TrainReport train_all(const TrainingCorpus& corpus, const Lexicon& lexicon, const TrainConfig& cfg);

/// Manifest lines: "<feature file> <label file> [digest]", relative to the manifest's directory.
TrainingCorpus read_corpus_manifest(const std::filesystem::path& path);
/// One manifest line: paths relative to the manifest's directory, optional waveform digest.
struct ManifestEntry {
  std::filesystem::path features;
  std::filesystem::path labels;
  std::string digest;
};

void write_corpus_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace svasr
