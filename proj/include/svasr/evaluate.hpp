#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svasr/decoder.hpp"
#include "svasr/lingua.hpp"
#include "svasr/training.hpp"

namespace svasr {

struct AlignmentResult {
  enum class Op { hit, substitution, deletion, insertion };
  struct Pair {
    Op op;
    std::string ref;  // empty for insertions
    std::string hyp;  // empty for deletions
  };

  int hits = 0;
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  std::vector<Pair> pairs;

  int errors() const { return substitutions + deletions + insertions; }
};

/// Unit-cost edit-distance alignment. Among equal-cost alignments the
/// backtrace prefers a diagonal step, then a deletion, then an insertion.
AlignmentResult align(const WordSequence& ref, const WordSequence& hyp);

struct UtteranceVerdict {
  std::string id;
  AlignmentResult alignment;
  bool exact = false;
  bool accepted = false;
  bool completed = false;
};

struct ScoreReport {
  int reference_words = 0;
  int hits = 0;
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  double percent_correct = 0.0;
  double accuracy = 0.0;
  /// Fraction of utterances decoded exactly and accepted by the gate.
  double command_completion_rate = 0.0;
  std::vector<UtteranceVerdict> utterances;
};

struct ScoredUtterance {
  std::string id;
  WordSequence reference;
  /// nullopt when decoding found no parse; scored as an empty, rejected hypothesis.
  std::optional<Hypothesis> hypothesis;
};

ScoreReport score(const std::vector<ScoredUtterance>& items);

std::string format_report(const ScoreReport& report);
/// One JSON object per utterance, then a summary object.
std::string format_report_jsonl(const ScoreReport& report);

/// Transcript file: "<id> WORD WORD ..." per line.
std::vector<std::pair<std::string, WordSequence>> read_transcripts(const std::filesystem::path& path);
void write_transcripts(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, WordSequence>>& transcripts);

/// Failed utterances of the session (no parse, rejected, or words differing from the
/// logged reference) appended to the corpus with labels from <label_dir>/<id>.lab.
/// Utterances whose waveform digest is already in the corpus are skipped.
TrainingCorpus capture_errors(const std::filesystem::path& session_dir,
                              const std::filesystem::path& label_dir, TrainingCorpus corpus,
                              std::vector<std::string>* captured_ids = nullptr);

bool is_failure(const SessionRecord& r);

}  // namespace svasr
