#include "svasr/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "svasr/util.hpp"

namespace svasr {

AlignmentResult align(const WordSequence& ref, const WordSequence& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) cost[i][0] = int(i);
  for (std::size_t j = 0; j <= m; ++j) cost[0][j] = int(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      cost[i][j] = std::min({cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), cost[i - 1][j] + 1,
                             cost[i][j - 1] + 1});

  AlignmentResult r;
  std::size_t i = n, j = m;
  using Op = AlignmentResult::Op;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      const bool hit = ref[i - 1] == hyp[j - 1];
      r.pairs.push_back({hit ? Op::hit : Op::substitution, ref[i - 1], hyp[j - 1]});
      ++(hit ? r.hits : r.substitutions);
      --i, --j;
    } else if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
      r.pairs.push_back({Op::deletion, ref[i - 1], {}});
      ++r.deletions;
      --i;
    } else {
      r.pairs.push_back({Op::insertion, {}, hyp[j - 1]});
      ++r.insertions;
      --j;
    }
  }
  std::reverse(r.pairs.begin(), r.pairs.end());
  return r;
}

ScoreReport score(const std::vector<ScoredUtterance>& items) {
  if (items.empty()) throw DomainError("nothing to score");
  ScoreReport report;
  int completed = 0;
  for (const auto& item : items) {
    UtteranceVerdict v;
    v.id = item.id;
    const WordSequence hyp = item.hypothesis ? item.hypothesis->words : WordSequence{};
    v.alignment = align(item.reference, hyp);
    v.exact = item.hypothesis && hyp == item.reference;
    v.accepted = item.hypothesis && item.hypothesis->accepted;
    v.completed = v.exact && v.accepted;
    completed += v.completed ? 1 : 0;
    report.reference_words += int(item.reference.size());
    report.hits += v.alignment.hits;
    report.substitutions += v.alignment.substitutions;
    report.deletions += v.alignment.deletions;
    report.insertions += v.alignment.insertions;
    report.utterances.push_back(std::move(v));
  }
  if (report.reference_words > 0) {
    report.percent_correct = 100.0 * report.hits / report.reference_words;
    report.accuracy = 100.0 * (report.hits - report.insertions) / report.reference_words;
  }
  report.command_completion_rate = double(completed) / double(items.size());
  return report;
}

std::string format_report(const ScoreReport& r) {
  char buf[256];
  std::ostringstream out;
  out << "------------------------ Overall Results --------------------------\n";
  std::snprintf(buf, sizeof buf, "WORD: %%Corr=%.2f, Acc=%.2f [H=%d, D=%d, S=%d, I=%d, N=%d]\n",
                r.percent_correct, r.accuracy, r.hits, r.deletions, r.substitutions, r.insertions,
                r.reference_words);
  out << buf;
  int done = 0;
  for (const auto& u : r.utterances) done += u.completed;
  std::snprintf(buf, sizeof buf, "COMMAND: completion=%.2f%% [%d of %zu]\n", 100.0 * r.command_completion_rate,
                done, r.utterances.size());
  out << buf;
  for (const auto& u : r.utterances) {
    if (u.completed) continue;
    out << "  " << u.id << ": " << (u.exact ? "exact" : "mismatch") << ", "
        << (u.accepted ? "accepted" : "rejected") << '\n';
  }
  out << "===================================================================\n";
  return out.str();
}

std::string format_report_jsonl(const ScoreReport& r) {
  std::ostringstream out;
  for (const auto& u : r.utterances) {
    nlohmann::json j = {{"id", u.id},
                        {"hits", u.alignment.hits},
                        {"substitutions", u.alignment.substitutions},
                        {"deletions", u.alignment.deletions},
                        {"insertions", u.alignment.insertions},
                        {"exact", u.exact},
                        {"accepted", u.accepted},
                        {"completed", u.completed}};
    out << j.dump() << '\n';
  }
  nlohmann::json summary = {{"summary", true},
                            {"reference_words", r.reference_words},
                            {"hits", r.hits},
                            {"substitutions", r.substitutions},
                            {"deletions", r.deletions},
                            {"insertions", r.insertions},
                            {"percent_correct", r.percent_correct},
                            {"accuracy", r.accuracy},
                            {"command_completion_rate", r.command_completion_rate}};
  out << summary.dump() << '\n';
  return out.str();
}

std::vector<std::pair<std::string, WordSequence>> read_transcripts(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::pair<std::string, WordSequence>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_whitespace(line);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    out.emplace_back(tokens[0], WordSequence(tokens.begin() + 1, tokens.end()));
  }
  return out;
}

void write_transcripts(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, WordSequence>>& transcripts) {
  std::ostringstream out;
  for (const auto& [id, words] : transcripts) {
    out << id;
    for (const auto& w : words) out << ' ' << w;
    out << '\n';
  }
  write_text_file(path, out.str());
}

bool is_failure(const SessionRecord& r) {
  if (r.status != DecodeStatus::accepted) return true;
  return r.reference && *r.reference != r.words;
}

TrainingCorpus capture_errors(const std::filesystem::path& session_dir,
                              const std::filesystem::path& label_dir, TrainingCorpus corpus,
                              std::vector<std::string>* captured_ids) {
  for (const auto& r : read_session(session_dir)) {
    if (!is_failure(r) || corpus.contains_digest(r.digest)) continue;
    const auto label_path = label_dir / (r.id + ".lab");
    if (!std::filesystem::exists(label_path))
      throw Error("failed utterance " + r.id + " has no corrected label file " + label_path.string());
    Utterance u;
    u.id = r.id;
    u.features = read_param_file(r.features_path);
    u.labels = read_labels(label_path);
    u.digest = r.digest;
    corpus.add(std::move(u));
    if (captured_ids) captured_ids->push_back(r.id);
  }
  return corpus;
}

}  // namespace svasr
