#include <doctest.h>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "svasr/evaluate.hpp"

using namespace svasr;
using svasr::test::Gen;
using svasr::test::TempDir;
using Op = AlignmentResult::Op;

namespace {

/// Plain Levenshtein distance, computed row by row.
int edit_distance(const WordSequence& a, const WordSequence& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = int(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = int(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

WordSequence random_words(Gen& gen, int max_len) {
  static const std::vector<std::string> vocab{"SIL", "NUM_1", "NUM_3", "NUM_4", "ON"};
  WordSequence w(std::size_t(gen.integer(0, max_len)));
  for (auto& x : w) x = gen.pick(vocab);
  return w;
}

Hypothesis hyp_of(WordSequence words, bool accepted) {
  Hypothesis h;
  h.words = h.raw_words = std::move(words);
  h.frames = 10;
  h.accepted = accepted;
  return h;
}

}  // namespace

TEST_CASE("alignment examples") {
  const auto same = align({"SIL", "NUM_1", "SIL"}, {"SIL", "NUM_1", "SIL"});
  CHECK(same.hits == 3);
  CHECK(same.errors() == 0);

  const auto del = align({"NUM_3", "NUM_4"}, {"NUM_3"});
  CHECK(del.hits == 1);
  CHECK(del.deletions == 1);
  CHECK(del.substitutions == 0);
  REQUIRE(del.pairs.size() == 2);
  CHECK(del.pairs[1].op == Op::deletion);
  CHECK(del.pairs[1].ref == "NUM_4");

  const auto ins = align({}, {"NUM_1"});
  CHECK(ins.insertions == 1);
  CHECK(ins.hits == 0);

  // A substitution is preferred over a deletion plus an insertion.
  const auto sub = align({"A"}, {"B"});
  CHECK(sub.substitutions == 1);
  CHECK(sub.deletions + sub.insertions == 0);
}

TEST_CASE("alignment properties") {
  Gen gen(61);
  for (int trial = 0; trial < 500; ++trial) {
    const WordSequence ref = random_words(gen, 7), hyp = random_words(gen, 7);
    const auto a = align(ref, hyp);
    CHECK(a.hits + a.substitutions + a.deletions == int(ref.size()));
    CHECK(a.hits + a.substitutions + a.insertions == int(hyp.size()));
    CHECK(a.errors() == edit_distance(ref, hyp));
    const auto b = align(hyp, ref);
    CHECK(b.errors() == a.errors());
    CHECK(align(ref, ref).errors() == 0);

    WordSequence r, h;
    for (const auto& p : a.pairs) {
      if (p.op != Op::insertion) r.push_back(p.ref);
      if (p.op != Op::deletion) h.push_back(p.hyp);
      if (p.op == Op::hit) CHECK(p.ref == p.hyp);
      if (p.op == Op::substitution) CHECK(p.ref != p.hyp);
    }
    CHECK(r == ref);
    CHECK(h == hyp);
  }
}

TEST_CASE("score") {
  const WordSequence ref{"SIL", "NUM_1", "SIL", "SIL"};
  const auto all = score({{"a", ref, hyp_of(ref, true)}, {"b", ref, hyp_of(ref, true)}});
  CHECK(all.command_completion_rate == 1.0);
  CHECK(all.accuracy == 100.0);
  CHECK(all.percent_correct == 100.0);

  const auto half = score({{"a", ref, hyp_of(ref, true)}, {"b", ref, hyp_of(ref, false)}});
  CHECK(half.command_completion_rate == 0.5);
  CHECK(half.accuracy == 100.0);
  CHECK_FALSE(half.utterances[1].completed);
  CHECK(half.utterances[1].exact);

  const auto none = score({{"a", ref, std::nullopt}});
  CHECK(none.deletions == 4);
  CHECK(none.command_completion_rate == 0.0);

  CHECK_THROWS_AS(score({}), DomainError);

  Gen gen(62);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredUtterance> items;
    int h = 0, s = 0, d = 0, i = 0, n = 0, exact = 0;
    const int count = gen.integer(1, 8);
    for (int k = 0; k < count; ++k) {
      WordSequence r = random_words(gen, 5);
      if (r.empty()) r.push_back("SIL");
      WordSequence y = gen.coin() ? r : random_words(gen, 5);
      const auto a = align(r, y);
      h += a.hits, s += a.substitutions, d += a.deletions, i += a.insertions, n += int(r.size());
      exact += y == r;
      items.push_back({"u" + std::to_string(k), r, hyp_of(y, gen.coin(0.8))});
    }
    const auto rep = score(items);
    CHECK(rep.hits == h);
    CHECK(rep.substitutions == s);
    CHECK(rep.deletions == d);
    CHECK(rep.insertions == i);
    CHECK(rep.reference_words == n);
    CHECK(rep.percent_correct == doctest::Approx(100.0 * h / n));
    CHECK(rep.accuracy == doctest::Approx(100.0 * (h - i) / n));
    CHECK(rep.accuracy <= rep.percent_correct);
    CHECK(rep.command_completion_rate <= double(exact) / count + 1e-12);
  }
}

TEST_CASE("report formats") {
  const WordSequence ref{"SIL", "NUM_3", "NUM_4", "SIL", "SIL"};
  const auto rep = score({{"a", ref, hyp_of({"SIL", "NUM_3", "SIL", "SIL"}, true)}, {"b", ref, hyp_of(ref, true)}});
  const std::string text = format_report(rep);
  CHECK(text.find("H=9, D=1, S=0, I=0, N=10") != std::string::npos);
  CHECK(text.find("[1 of 2]") != std::string::npos);

  const std::string jsonl = format_report_jsonl(rep);
  std::istringstream in(jsonl);
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["id"] == "a");
  CHECK(rows[0]["deletions"] == 1);
  CHECK(rows[2]["command_completion_rate"] == 0.5);
}

TEST_CASE("transcripts") {
  TempDir dir("evaluate");
  const std::vector<std::pair<std::string, WordSequence>> t{{"utt0000", {"SIL", "NUM_1", "SIL", "SIL"}}, {"utt0001", {}}};
  write_transcripts(dir / "t.txt", t);
  CHECK(read_transcripts(dir / "t.txt") == t);
}

TEST_CASE("capture_errors") {
  TempDir dir("capture");
  Gen gen(63);
  std::vector<SessionEntry> entries;
  for (int i = 0; i < 3; ++i) {
    SessionEntry e;
    e.id = "utt" + std::to_string(i);
    for (int k = 0; k < 800 + i; ++k) e.waveform.samples.push_back(std::int16_t(gen.integer(-50, 50)));
    e.features.frames = Eigen::MatrixXd::Random(39, 20).cast<float>().cast<double>();
    e.reference = WordSequence{"SIL", "NUM_1", "SIL", "SIL"};
    e.hypothesis = hyp_of(*e.reference, true);
    entries.push_back(std::move(e));
  }
  entries[1].hypothesis = hyp_of({"SIL", "NUM_2", "SIL", "SIL"}, true);
  entries[2].hypothesis = hyp_of(*entries[2].reference, false);
  record_session(entries, dir / "session");

  const auto records = read_session(dir / "session");
  CHECK_FALSE(is_failure(records[0]));
  CHECK(is_failure(records[1]));
  CHECK(is_failure(records[2]));

  std::filesystem::create_directories(dir / "labels");
  write_labels({{0, 1'000'000, "sil"}, {1'000'000, 2'000'000, "s"}}, dir / "labels/utt1.lab");
  CHECK_THROWS_AS(capture_errors(dir / "session", dir / "labels", {}), Error);

  write_labels({{0, 2'000'000, "sil"}}, dir / "labels/utt2.lab");
  std::vector<std::string> ids;
  const TrainingCorpus grown = capture_errors(dir / "session", dir / "labels", {}, &ids);
  CHECK(ids == std::vector<std::string>{"utt1", "utt2"});
  REQUIRE(grown.utterances.size() == 2);
  CHECK(grown.utterances[0].features.frames == entries[1].features.frames);

  std::vector<std::string> again;
  const TrainingCorpus same = capture_errors(dir / "session", dir / "labels", grown, &again);
  CHECK(again.empty());
  CHECK(same.utterances.size() == 2);
}
