#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svasr/acoustic.hpp"
#include "svasr/audio.hpp"
#include "svasr/features.hpp"
#include "svasr/lingua.hpp"

namespace svasr {

struct DecodeConfig {
  /// Tokens scoring below (best - beam_logwidth) are dropped each frame.
  double beam_logwidth = std::numeric_limits<double>::infinity();
  /// A hypothesis is accepted when its average log-likelihood per frame exceeds this.
  double frame_prob_threshold = -200.0;
  double endpoint_margin_db = 10.0;
  double endpoint_min_speech_ms = 100.0;
  double endpoint_min_silence_ms = 300.0;
  /// Lowest noise floor the endpointer will assume, in dB re 1 LSB.
  double endpoint_floor_db = 20.0;

  void validate() const;
};

/// Phone-state graph compiled from a word network. Non-emitting nodes join
/// phone models and words; arcs leaving a word's last phone carry its word id.
class RecognitionNetwork {
 public:
  struct Arc {
    std::uint32_t to = 0;
    double log_prob = 0.0;
    std::int32_t word = -1;
  };
  struct Node {
    /// Index into pdfs() for emitting nodes, -1 for non-emitting ones.
    std::int32_t pdf = -1;
    std::vector<Arc> arcs;
  };

  std::size_t start() const { return 0; }
  std::size_t end() const { return 1; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<const GmmStateD*>& pdfs() const { return pdfs_; }
  const std::vector<std::uint32_t>& null_order() const { return null_order_; }
  /// Word network after contraction words were added; word ids index its labels.
  const WordNetwork& words() const { return words_; }
  const Lexicon& lexicon() const { return lexicon_; }
  Eigen::Index dim() const { return models_->dim; }

 private:
  friend RecognitionNetwork build_recognition_network(const WordNetwork&, const Lexicon&, const HmmSet&);

  std::shared_ptr<const HmmSet> models_;
  Lexicon lexicon_;
  WordNetwork words_;
  std::vector<Node> nodes_;
  std::vector<const GmmStateD*> pdfs_;
  std::vector<std::uint32_t> null_order_;
};

/// Adds, for every lexicon contraction w1_w2, a node wherever w1 is followed by w2.
WordNetwork augment_with_contractions(const WordNetwork& net, const Lexicon& lex);

RecognitionNetwork build_recognition_network(const WordNetwork& net, const Lexicon& lex,
                                             const HmmSet& models);

struct WordSpan {
  std::string word;
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
};

struct Hypothesis {
  /// Contraction words replaced by their expansions.
  WordSequence words;
  WordSequence raw_words;
  double total_logprob = 0.0;
  double frame_probability = 0.0;
  Eigen::Index frames = 0;
  /// Frame spans of raw_words; they tile [0, frames).
  std::vector<WordSpan> word_times;
  bool accepted = false;
};

/// Frame-synchronous token passing with one token per network node. Returns
/// nullopt when no token reaches the end node (no parse), including for empty input.
std::optional<Hypothesis> decode(const RecognitionNetwork& rn, const FeatureSequence& seq,
                                 const DecodeConfig& cfg);

/// Average log-likelihood per frame.
double frame_probability(const Hypothesis& hyp);

/// Sets accepted = frame_probability > threshold; the words are kept either way.
Hypothesis gate(Hypothesis hyp, double threshold);

// ---------------------------------------------------------------------------

/// Half-open range of 10 ms frames.
struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const FrameRange&) const = default;
};

/// Energy endpointer over non-overlapping 10 ms frames. The noise floor is the
/// 10th-percentile frame level, but never below endpoint_floor_db. Frames above
/// floor + margin are speech; gaps under min_silence are bridged, then runs
/// under min_speech are dropped.
std::vector<FrameRange> endpoint(const Waveform& w, const DecodeConfig& cfg);

// ---------------------------------------------------------------------------

struct SessionEntry {
  std::string id;
  Waveform waveform;
  FeatureSequence features;
  std::optional<Hypothesis> hypothesis;
  std::optional<WordSequence> reference;
};

enum class DecodeStatus { accepted, rejected, no_parse };

struct SessionRecord {
  std::string id;
  DecodeStatus status = DecodeStatus::no_parse;
  Eigen::Index frames = 0;
  double total_logprob = 0.0;
  double frame_probability = 0.0;
  int sample_rate_hz = 16000;
  std::string digest;
  WordSequence raw_words;
  WordSequence words;
  std::optional<WordSequence> reference;

  std::filesystem::path waveform_path;
  std::filesystem::path features_path;
};

DecodeStatus status_of(const std::optional<Hypothesis>& hyp);
const char* to_string(DecodeStatus s);

inline constexpr const char* kSessionLog = "session.log";

/// Writes <id>.htk (raw PCM), <id>.mfc and one session.log line per entry.
void record_session(const std::vector<SessionEntry>& entries, const std::filesystem::path& directory);
std::vector<SessionRecord> read_session(const std::filesystem::path& directory);

/// Digest of a waveform's samples, as stored in session logs and manifests.
std::string waveform_digest(const Waveform& w);

}  // namespace svasr
