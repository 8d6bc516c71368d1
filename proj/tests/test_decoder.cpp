#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "support.hpp"
#include "svasr/decoder.hpp"

using namespace svasr;
using svasr::test::Gen;
using svasr::test::TempDir;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Models for every phone of the task lexicon with means far apart, plus frames
/// sampled along a chosen phone sequence.
struct SeparatedSystem {
  HmmSet models;
  std::map<std::string, std::vector<Eigen::VectorXd>> means;

  explicit SeparatedSystem(const Lexicon& lex, Gen& gen) {
    for (const auto& phone : phone_inventory(lex)) {
      Hmm h = make_left_to_right(phone, phone == "sp" ? 1 : 3, 3, phone == "sp" ? 0.3 : 0.0);
      for (auto& s : h.states) {
        Eigen::VectorXd mean(3);
        for (int d = 0; d < 3; ++d) mean[d] = gen.real(-40, 40);
        s.components[0].gaussian = GaussianD(mean, Eigen::VectorXd::Ones(3));
        means[phone].push_back(mean);
      }
      models.add(std::move(h));
    }
  }

  FeatureSequence render(const std::vector<std::string>& phones, Gen& gen, int frames_per_state) const {
    std::vector<Eigen::VectorXd> cols;
    for (const auto& p : phones)
      for (const auto& m : means.at(p))
        for (int t = 0; t < frames_per_state; ++t)
          cols.push_back(m + Eigen::Vector3d(gen.normal(), gen.normal(), gen.normal()));
    FeatureSequence f;
    f.frames.resize(3, Eigen::Index(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) f.frames.col(Eigen::Index(i)) = cols[i];
    return f;
  }
};

void check_hypothesis_shape(const Hypothesis& h, const RecognitionNetwork& rn) {
  CHECK(std::abs(h.frame_probability * double(h.frames) - h.total_logprob) <= 1e-9 * std::max(1.0, std::abs(h.total_logprob)));
  REQUIRE(h.word_times.size() == h.raw_words.size());
  Eigen::Index at = 0;
  for (const auto& span : h.word_times) {
    CHECK(span.begin == at);
    CHECK(span.end >= span.begin);
    at = span.end;
  }
  CHECK(at == h.frames);
  CHECK(accepts(rn.words(), h.raw_words));
}

}  // namespace

TEST_CASE("decoder agrees with exhaustive sentence enumeration") {
  Gen gen(51);
  int checked = 0;
  while (checked < 60) {
    const Eigen::Index dim = gen.integer(1, 2);
    const auto sys = test::random_tiny_system(gen, dim);
    const WordNetwork net = compile_network(parse_grammar(test::random_tiny_grammar(gen)));
    const Eigen::Index T = gen.integer(1, 12);
    if (enumerate_sentences(net, std::size_t(T)).size() > 600) continue;
    const Eigen::MatrixXd obs = test::random_observations(gen, dim, T);
    const auto rn = build_recognition_network(net, sys.lexicon, sys.models);
    FeatureSequence seq;
    seq.frames = obs;
    const auto hyp = decode(rn, seq, DecodeConfig{});
    const auto oracle = test::oracle_decode(net, sys.lexicon, sys.models, obs, std::size_t(T));
    if (oracle.score == kLogZero<double>) {
      CHECK_FALSE(hyp.has_value());
    } else {
      REQUIRE(hyp.has_value());
      CHECK(rel_err(hyp->total_logprob, oracle.score) <= 1e-8);
      // Different words can spell the same phone chain; a tie is still an argmax.
      if (hyp->raw_words != oracle.words)
        CHECK(rel_err(test::sentence_score(hyp->raw_words, sys.lexicon, sys.models, obs), oracle.score) <= 1e-12);
      check_hypothesis_shape(*hyp, rn);
    }
    ++checked;
  }
}

TEST_CASE("recognition network construction") {
  Gen gen(52);
  const Lexicon lex = test::idswitch_lexicon();
  const SeparatedSystem sys(lex, gen);
  const WordNetwork net = compile_network(parse_grammar(test::fig2_grammar()));
  const auto rn = build_recognition_network(net, lex, sys.models);
  CHECK(rn.dim() == 3);
  CHECK(rn.words().size() == net.size());

  // One chain per pronunciation of NUM_0: k oh s oh ng, 3 states each.
  const WordNetwork zero = compile_network(parse_grammar("(NUM_0)"));
  const auto rz = build_recognition_network(zero, lex, sys.models);
  std::size_t emitting = 0;
  for (const auto& n : rz.nodes()) emitting += n.pdf >= 0;
  CHECK(emitting == 15);
  const WordNetwork noise = compile_network(parse_grammar("(NOISE)"));
  const auto rnoise = build_recognition_network(noise, lex, sys.models);
  std::size_t noise_emitting = 0;
  for (const auto& n : rnoise.nodes()) noise_emitting += n.pdf >= 0;
  CHECK(noise_emitting == 2 * (3 + 1));

  HmmSet missing = sys.models;
  missing.models.erase("ng");
  CHECK_THROWS_AS(build_recognition_network(net, lex, missing), DomainError);
  CHECK_THROWS_AS(build_recognition_network(compile_network(parse_grammar("(FOO)")), lex, sys.models), DomainError);
}

TEST_CASE("contraction words stand in for their expansion pair") {
  const Lexicon lex = parse_lexicon(read_text_file(test::data_dir() / "idswitch_contraction.dict"));
  const WordNetwork net = compile_network(parse_grammar(test::fig2_grammar()));
  const WordNetwork aug = augment_with_contractions(net, lex);
  const auto original = enumerate_sentences(net, 6);
  for (const auto& s : original) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s[i] != "NUM_3" || s[i + 1] != "NUM_4") continue;
      WordSequence c(s.begin(), s.begin() + std::ptrdiff_t(i));
      c.push_back("NUM_3_4");
      c.insert(c.end(), s.begin() + std::ptrdiff_t(i) + 2, s.end());
      CHECK(accepts(aug, c));
    }
  }
  std::size_t with_contraction = 0;
  for (const auto& s : enumerate_sentences(aug, 5)) {
    CHECK(accepts(net, lex.expand(s)));
    with_contraction += std::count(s.begin(), s.end(), "NUM_3_4") > 0;
  }
  CHECK(with_contraction > 0);
}

TEST_CASE("decoding well separated synthetic features") {
  Gen gen(53);
  const Lexicon lex = parse_lexicon(read_text_file(test::data_dir() / "idswitch_contraction.dict"));
  const SeparatedSystem sys(lex, gen);
  const WordNetwork net = compile_network(parse_grammar(test::fig2_grammar()));
  const auto rn = build_recognition_network(net, lex, sys.models);
  DecodeConfig cfg;
  cfg.beam_logwidth = 300;

  const std::vector<std::pair<std::vector<std::string>, WordSequence>> cases{
      {{"sil", "s", "ah", "t", "uh", "sil", "sil"}, {"SIL", "NUM_1", "SIL", "SIL"}},
      {{"sil", "t", "ah", "m", "ah", "n", "oh", "n", "t", "sp", "sil"}, {"SIL", "GARDEN", "ON", "NOISE", "SIL"}},
      {{"sil", "t", "ih", "g", "ah", "m", "p", "ah", "t", "sil", "sil"}, {"SIL", "NUM_3", "NUM_4", "SIL", "SIL"}},
  };
  for (const auto& [phones, words] : cases) {
    const auto hyp = decode(rn, sys.render(phones, gen, 3), cfg);
    REQUIRE(hyp.has_value());
    CHECK(hyp->words == words);
    CHECK(hyp->accepted);
    check_hypothesis_shape(*hyp, rn);
  }

  CHECK_FALSE(decode(rn, FeatureSequence{}, cfg).has_value());
  FeatureSequence wrong;
  wrong.frames = Eigen::MatrixXd::Zero(2, 5);
  CHECK_THROWS_AS(decode(rn, wrong, cfg), DomainError);
  // Too short for any sentence: two 3-state phones need at least 6 frames.
  CHECK_FALSE(decode(rn, sys.render({"sil"}, gen, 1), cfg).has_value());
}

TEST_CASE("gating") {
  Hypothesis h;
  h.total_logprob = -500;
  h.frames = 100;
  CHECK(frame_probability(h) == -5.0);
  CHECK(gate(h, -10).accepted);
  CHECK_FALSE(gate(h, -3).accepted);
  CHECK_FALSE(gate(h, -5).accepted);
  h.words = {"SIL", "NUM_1", "SIL", "SIL"};
  CHECK(gate(h, -3).words == h.words);

  Gen gen(54);
  for (int trial = 0; trial < 200; ++trial) {
    h.total_logprob = gen.real(-2000, 100);
    h.frames = gen.integer(1, 300);
    const double hi = gen.real(-50, 5), lo = hi - gen.real(0, 30);
    if (gate(h, hi).accepted) CHECK(gate(h, lo).accepted);
  }
}

TEST_CASE("endpointing") {
  DecodeConfig cfg;
  Gen gen(55);
  auto noise = [&](std::size_t n, double sigma) {
    std::vector<std::int16_t> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(std::int16_t(std::lround(sigma * gen.normal())));
    return v;
  };
  auto tone = [&](std::size_t n, double amplitude) {
    std::vector<std::int16_t> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(std::int16_t(std::lround(amplitude * std::sin(2 * std::numbers::pi * 440 * double(i) / 16000))));
    return v;
  };
  auto concat = [](std::initializer_list<std::vector<std::int16_t>> parts) {
    Waveform w;
    for (const auto& p : parts) w.samples.insert(w.samples.end(), p.begin(), p.end());
    return w;
  };

  SUBCASE("one tone between silences") {
    // Noise at 40 dB, tone at 70 dB.
    const Waveform w = concat({noise(8000, 100), tone(8000, 3162 * std::sqrt(2.0)), noise(8000, 100)});
    const auto ranges = endpoint(w, cfg);
    REQUIRE(ranges.size() == 1);
    CHECK(std::abs(int(ranges[0].begin) - 50) <= 2);
    CHECK(std::abs(int(ranges[0].end) - 100) <= 2);
  }

  SUBCASE("silence only") {
    CHECK(endpoint(concat({noise(16000, 100)}), cfg).empty());
    CHECK(endpoint(Waveform{std::vector<std::int16_t>(16000, 0), 16000}, cfg).empty());
    CHECK(endpoint(Waveform{}, cfg).empty());
  }

  SUBCASE("scaling down removes low-level transients") {
    // Background near 0 dB, so the floor clamps at endpoint_floor_db (20 dB) and
    // the threshold is 30 dB. Transients at 35 dB, speech at 70 dB.
    const double transient = std::pow(10.0, 35.0 / 20.0) * std::sqrt(2.0);
    const double speech = std::pow(10.0, 70.0 / 20.0) * std::sqrt(2.0);
    const Waveform w = concat({noise(8000, 1), tone(2400, transient), noise(8000, 1), tone(8000, speech),
                               noise(8000, 1), tone(2400, transient), noise(8000, 1)});
    const auto before = endpoint(w, cfg);
    const auto after = endpoint(scale_volume(w, 0.3), cfg);
    CHECK(before.size() == 3);
    REQUIRE(after.size() == 1);
    CHECK(std::abs(int(after[0].begin) - 115) <= 2);
    CHECK(std::abs(int(after[0].end) - 165) <= 2);
  }

  SUBCASE("short gaps are bridged, short bursts dropped") {
    const double loud = 3000;
    const Waveform bridged = concat({noise(8000, 1), tone(3200, loud), noise(3200, 1), tone(3200, loud), noise(8000, 1)});
    CHECK(endpoint(bridged, cfg).size() == 1);
    const Waveform burst = concat({noise(8000, 1), tone(800, loud), noise(8000, 1)});
    CHECK(endpoint(burst, cfg).empty());
  }
}

TEST_CASE("session recording") {
  Gen gen(56);
  const Lexicon lex = test::idswitch_lexicon();
  const SeparatedSystem sys(lex, gen);
  const auto rn = build_recognition_network(compile_network(parse_grammar(test::fig2_grammar())), lex, sys.models);
  DecodeConfig cfg;

  std::vector<SessionEntry> entries;
  for (int i = 0; i < 3; ++i) {
    SessionEntry e;
    e.id = "utt" + std::to_string(i);
    for (int k = 0; k < 1600; ++k) e.waveform.samples.push_back(std::int16_t(gen.integer(-500, 500)));
    e.features = sys.render({"sil", "s", "ah", "t", "uh", "sil", "sil"}, gen, 2 + i);
    e.features.frames = e.features.frames.cast<float>().cast<double>();
    e.hypothesis = decode(rn, e.features, cfg);
    if (i == 1) e.reference = WordSequence{"SIL", "NUM_1", "SIL", "SIL"};
    entries.push_back(std::move(e));
  }
  entries.back().hypothesis = gate(*entries.back().hypothesis, 1e9);

  TempDir dir("session");
  record_session(entries, dir.path());
  std::size_t htk = 0, mfc = 0;
  for (const auto& f : std::filesystem::directory_iterator(dir.path())) {
    htk += f.path().extension() == ".htk";
    mfc += f.path().extension() == ".mfc";
  }
  CHECK(htk == 3);
  CHECK(mfc == 3);

  const auto records = read_session(dir.path());
  REQUIRE(records.size() == 3);
  CHECK(records[0].status == DecodeStatus::accepted);
  CHECK(records[2].status == DecodeStatus::rejected);
  CHECK(records[1].reference == WordSequence{"SIL", "NUM_1", "SIL", "SIL"});
  CHECK_FALSE(records[0].reference.has_value());
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = records[i];
    CHECK(r.words == entries[i].hypothesis->words);
    CHECK(r.total_logprob == entries[i].hypothesis->total_logprob);
    CHECK(r.digest == waveform_digest(entries[i].waveform));
    CHECK(read_waveform(r.waveform_path, WaveFormat::raw) == entries[i].waveform);
    // Re-decoding the stored features reproduces the logged result exactly.
    const auto again = decode(rn, read_param_file(r.features_path), cfg);
    REQUIRE(again.has_value());
    CHECK(again->total_logprob == r.total_logprob);
    CHECK(again->raw_words == r.raw_words);
  }

  TempDir empty("session_empty");
  record_session({}, empty.path());
  CHECK(read_session(empty.path()).empty());
  CHECK(std::filesystem::exists(empty / kSessionLog));

  write_text_file(empty / kSessionLog, "utt\tmaybe\n");
  CHECK_THROWS_AS(read_session(empty.path()), FormatError);
}
