#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svasr/decoder.hpp"
#include "svasr/dispatch.hpp"
#include "svasr/error.hpp"
#include "svasr/evaluate.hpp"
#include "svasr/features.hpp"
#include "svasr/training.hpp"

namespace svasr {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct SynthConfig {
  double phone_duration_ms = 100.0;
  double noise_amplitude = 300.0;
  double tone_amplitude = 4000.0;
  double edge_ramp_ms = 20.0;
  int sample_rate_hz = 16000;
  std::size_t max_words = 5;
  std::string silence_phone = "sil";
};

/// Everything a subcommand reads from a key=value config file. Relative paths
/// are resolved against the config file's directory.
struct PipelineConfig {
  std::filesystem::path grammar;
  std::filesystem::path lexicon;
  /// Synthetic corpus directory: waveforms, labels, waveform list and transcripts.
  std::filesystem::path corpus = "corpus";
  /// Output directory of feats.
  std::filesystem::path features = "features";
  std::filesystem::path manifest = "features/train.list";
  std::filesystem::path models = "models/hmmset.txt";
  std::filesystem::path train_log = "models/train.log";
  std::filesystem::path pca_model = "models/pca.txt";
  std::filesystem::path session = "session";

  /// Apply the PCA model to features before training and decoding.
  bool pca_enabled = false;
  /// Components kept by cmd_pca; 0 means unset.
  Eigen::Index pca_k = 0;

  WaveFormat wave_format = WaveFormat::raw;
  ByteOrder byte_order = ByteOrder::little;

  MfccConfig mfcc;
  TrainConfig train;
  DecodeConfig decode;
  SynthConfig synth;

  std::string switch_endpoint = "127.0.0.1:5050";
  int switch_count = 4;
  std::map<std::string, int> switch_names = SwitchBank::default_names();

  SwitchBank make_bank() const { return SwitchBank(switch_count, switch_names); }
  void validate() const;
};

/// Parses "section.key = value" lines; '#' starts a comment. Unknown keys are errors.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
/// Every key with its current value, in parse_config syntax.
std::string format_config(const PipelineConfig& cfg);

inline constexpr const char* kWaveList = "waves.list";
inline constexpr const char* kTranscripts = "transcripts.txt";

/// Exit codes shared by all subcommands.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRejected = 3, kExitNoParse = 4 };

struct SynthResult {
  std::vector<std::string> ids;
  std::vector<WordSequence> sentences;
};

/// Writes <id>.htk and <id>.lab per utterance, plus waves.list and transcripts.txt,
/// into cfg.corpus. Sentences are drawn uniformly from the grammar's sentences of
/// at most synth.max_words words.
SynthResult cmd_synth(const PipelineConfig& cfg, std::size_t count, std::uint64_t seed, std::ostream& log);

struct FeatsResult {
  std::size_t computed = 0;
  std::size_t skipped = 0;
};

/// Converts every waveform of a list ("<wave> [<labels>]" lines) into cfg.features/<stem>.mfc.
/// A .digest sidecar holding the input and config digest lets unchanged inputs be skipped.
/// Entries with labels are written to cfg.manifest.
FeatsResult cmd_feats(const PipelineConfig& cfg, const std::filesystem::path& wave_list, std::ostream& log);

/// Fits PCA with k components on the manifest's features and writes cfg.pca_model.
PcaModel cmd_pca(const PipelineConfig& cfg, Eigen::Index k, std::ostream& log);

/// Trains on the manifest, writes cfg.models and the per-iteration log cfg.train_log.
TrainReport cmd_train(const PipelineConfig& cfg, std::ostream& log);

struct DecodeResult {
  std::vector<SessionEntry> entries;
  /// Worst outcome: kExitNoParse over kExitRejected over kExitOk.
  int exit_code = kExitOk;
};

/// Decodes each waveform and records the session into cfg.session. References are
/// taken from the transcripts file when given.
DecodeResult cmd_decode(const PipelineConfig& cfg, const std::vector<std::filesystem::path>& waves,
                        const std::optional<std::filesystem::path>& transcripts, std::ostream& log,
                        CommandChannel* dispatch_to = nullptr);

/// Scores a recorded session against its logged references, or against a transcripts file.
ScoreReport cmd_score(const PipelineConfig& cfg, const std::filesystem::path& session,
                      const std::optional<std::filesystem::path>& transcripts, std::ostream& log);

struct RefineResult {
  std::vector<std::string> captured;
  TrainReport training;
  /// Re-decode of every session utterance with the retrained models.
  std::vector<SessionEntry> retest;
  ScoreReport report;
};

/// Folds the session's failures (with corrected labels from label_dir) into the
/// training corpus, retrains, and re-decodes the session into <session>/retest.
RefineResult cmd_refine(const PipelineConfig& cfg, const std::filesystem::path& session,
                        const std::filesystem::path& label_dir, std::ostream& log);

/// Loads the grammar, lexicon, models and PCA model named by the config.
struct Recognizer {
  RecognitionNetwork network;
  std::optional<PcaModel> pca;
  MfccConfig mfcc;
  DecodeConfig decode;

  FeatureSequence features(const Waveform& w) const;
  std::optional<Hypothesis> recognize(const FeatureSequence& raw_features) const;
};

Recognizer load_recognizer(const PipelineConfig& cfg);

}  // namespace svasr
