#include "svasr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "svasr/util.hpp"

namespace svasr {

void DecodeConfig::validate() const {
  if (!(beam_logwidth > 0.0)) throw DomainError("beam width must be positive");
  if (!(endpoint_min_speech_ms > 0.0 && endpoint_min_silence_ms > 0.0))
    throw DomainError("endpoint durations must be positive");
}

// ---------------------------------------------------------------------------
// Network construction

WordNetwork augment_with_contractions(const WordNetwork& net, const Lexicon& lex) {
  WordNetwork out = net;
  const std::size_t original = net.size();
  std::vector<std::vector<std::size_t>> preds(original);
  for (std::size_t u = 0; u < original; ++u)
    for (auto v : net.successors[u]) preds[v].push_back(u);

  for (const auto& [word, expansion] : lex.contractions()) {
    if (expansion.size() != 2) continue;
    for (std::size_t a = 2; a < original; ++a) {
      if (net.labels[a] != expansion[0]) continue;
      for (auto b : net.successors[a]) {
        if (b == WordNetwork::kEnd || net.labels[b] != expansion[1]) continue;
        const std::size_t c = out.add_node(word);
        for (auto p : preds[a]) out.add_edge(p, c);
        for (auto s : net.successors[b]) out.add_edge(c, s);
      }
    }
  }
  return out;
}

RecognitionNetwork build_recognition_network(const WordNetwork& net, const Lexicon& lex,
                                             const HmmSet& models) {
  RecognitionNetwork rn;
  rn.models_ = std::make_shared<const HmmSet>(models);
  rn.lexicon_ = lex;
  rn.words_ = augment_with_contractions(net, lex);
  const WordNetwork& words = rn.words_;
  const HmmSet& hmms = *rn.models_;

  for (std::size_t w = 2; w < words.size(); ++w) {
    if (!lex.contains(words.labels[w]))
      throw DomainError("word '" + words.labels[w] + "' is not in the lexicon");
    for (const auto& pron : lex.pronunciations(words.labels[w]))
      for (const auto& phone : pron)
        if (!hmms.contains(phone))
          throw DomainError("phone '" + phone + "' of word '" + words.labels[w] + "' has no model");
  }

  auto& nodes = rn.nodes_;
  auto add_node = [&](std::int32_t pdf) {
    nodes.push_back({pdf, {}});
    return static_cast<std::uint32_t>(nodes.size() - 1);
  };
  auto add_arc = [&](std::uint32_t from, std::uint32_t to, double lp, std::int32_t word = -1) {
    if (lp == kLogZero<double>) return;
    nodes[from].arcs.push_back({to, lp, word});
  };

  std::map<const GmmStateD*, std::int32_t> pdf_ids;
  auto pdf_id = [&](const GmmStateD* s) {
    auto [it, inserted] = pdf_ids.try_emplace(s, static_cast<std::int32_t>(rn.pdfs_.size()));
    if (inserted) rn.pdfs_.push_back(s);
    return it->second;
  };

  add_node(-1);  // start
  add_node(-1);  // end
  std::vector<std::uint32_t> word_in(words.size()), word_out(words.size());
  word_in[WordNetwork::kStart] = word_out[WordNetwork::kStart] = 0;
  word_in[WordNetwork::kEnd] = word_out[WordNetwork::kEnd] = 1;
  for (std::size_t w = 2; w < words.size(); ++w) {
    word_in[w] = add_node(-1);
    word_out[w] = add_node(-1);
    for (const auto& pron : lex.pronunciations(words.labels[w])) {
      std::uint32_t prev = word_in[w];
      for (const auto& phone : pron) {
        const Hmm& h = hmms.at(phone);
        const int n = h.n_states();
        std::vector<std::uint32_t> state(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) state[std::size_t(j)] = add_node(pdf_id(&h.states[std::size_t(j)]));
        const std::uint32_t exit = add_node(-1);
        for (int j = 0; j < n; ++j) add_arc(prev, state[std::size_t(j)], h.log_trans(0, j + 1));
        add_arc(prev, exit, h.log_trans(0, n + 1));
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) add_arc(state[std::size_t(i)], state[std::size_t(j)], h.log_trans(i + 1, j + 1));
          add_arc(state[std::size_t(i)], exit, h.log_trans(i + 1, n + 1));
        }
        prev = exit;
      }
      add_arc(prev, word_out[w], 0.0, static_cast<std::int32_t>(w));
    }
  }
  for (std::size_t u = 0; u < words.size(); ++u)
    for (auto v : words.successors[u]) add_arc(word_out[u], word_in[v], 0.0);

  // Order non-emitting nodes so that every null-to-null arc points forward.
  std::vector<int> indegree(nodes.size(), 0);
  for (const auto& node : nodes)
    if (node.pdf < 0)
      for (const auto& a : node.arcs)
        if (nodes[a.to].pdf < 0) ++indegree[a.to];
  std::vector<std::uint32_t> ready;
  std::size_t null_count = 0;
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].pdf >= 0) continue;
    ++null_count;
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::reverse(ready.begin(), ready.end());
  while (!ready.empty()) {
    const std::uint32_t u = ready.back();
    ready.pop_back();
    rn.null_order_.push_back(u);
    for (const auto& a : nodes[u].arcs)
      if (nodes[a.to].pdf < 0 && --indegree[a.to] == 0) ready.push_back(a.to);
  }
  if (rn.null_order_.size() != null_count)
    throw DomainError("word network has a loop of words that can consume zero frames");
  return rn;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

struct Token {
  double score = kLogZero<double>;
  std::int32_t link = -1;
};

struct WordLink {
  std::int32_t word;
  std::int32_t prev;
  Eigen::Index end_frame;
};

}  // namespace

std::optional<Hypothesis> decode(const RecognitionNetwork& rn, const FeatureSequence& seq,
                                 const DecodeConfig& cfg) {
  cfg.validate();
  if (seq.empty()) return std::nullopt;
  if (seq.dim() != rn.dim())
    throw DomainError("feature dimension " + std::to_string(seq.dim()) + " does not match models (" +
                      std::to_string(rn.dim()) + ")");
  const auto& nodes = rn.nodes();
  const std::size_t n_nodes = nodes.size();
  std::vector<Token> emit(n_nodes), next_emit(n_nodes), null_tok(n_nodes), prev_null(n_nodes);
  std::vector<WordLink> links;
  std::vector<double> pdf_cache(rn.pdfs().size());
  std::vector<char> pdf_done(rn.pdfs().size());

  auto relax = [](Token& dst, double score, std::int32_t link) {
    if (score > dst.score) dst = {score, link};
  };
  auto propagate_null = [&](Eigen::Index frame) {
    for (std::uint32_t u : rn.null_order()) {
      const Token tok = null_tok[u];
      if (tok.score == kLogZero<double>) continue;
      for (const auto& a : nodes[u].arcs) {
        if (nodes[a.to].pdf >= 0) continue;
        const double s = tok.score + a.log_prob;
        if (!(s > null_tok[a.to].score)) continue;
        std::int32_t link = tok.link;
        if (a.word >= 0) {
          links.push_back({a.word, tok.link, frame});
          link = static_cast<std::int32_t>(links.size() - 1);
        }
        null_tok[a.to] = {s, link};
      }
    }
  };

  null_tok[rn.start()] = {0.0, -1};
  propagate_null(0);

  const Eigen::Index T = seq.size();
  for (Eigen::Index t = 0; t < T; ++t) {
    std::fill(next_emit.begin(), next_emit.end(), Token{});
    for (std::size_t u = 0; u < n_nodes; ++u) {
      const Token& tok = nodes[u].pdf >= 0 ? emit[u] : null_tok[u];
      if (tok.score == kLogZero<double>) continue;
      for (const auto& a : nodes[u].arcs)
        if (nodes[a.to].pdf >= 0) relax(next_emit[a.to], tok.score + a.log_prob, tok.link);
    }
    std::fill(pdf_done.begin(), pdf_done.end(), 0);
    double best = kLogZero<double>;
    for (std::size_t u = 0; u < n_nodes; ++u) {
      Token& tok = next_emit[u];
      if (tok.score == kLogZero<double>) continue;
      const auto pdf = static_cast<std::size_t>(nodes[u].pdf);
      if (!pdf_done[pdf]) {
        pdf_cache[pdf] = log_emission(*rn.pdfs()[pdf], seq.frame(t));
        pdf_done[pdf] = 1;
      }
      tok.score += pdf_cache[pdf];
      best = std::max(best, tok.score);
    }
    if (std::isfinite(cfg.beam_logwidth))
      for (auto& tok : next_emit)
        if (tok.score < best - cfg.beam_logwidth) tok = Token{};
    std::swap(emit, next_emit);

    std::fill(null_tok.begin(), null_tok.end(), Token{});
    for (std::size_t u = 0; u < n_nodes; ++u) {
      const Token& tok = emit[u];
      if (nodes[u].pdf < 0 || tok.score == kLogZero<double>) continue;
      for (const auto& a : nodes[u].arcs)
        if (nodes[a.to].pdf < 0) relax(null_tok[a.to], tok.score + a.log_prob, tok.link);
    }
    propagate_null(t + 1);
  }

  const Token final = null_tok[rn.end()];
  if (final.score == kLogZero<double>) return std::nullopt;

  Hypothesis hyp;
  hyp.frames = T;
  hyp.total_logprob = final.score;
  hyp.frame_probability = final.score / double(T);
  std::vector<const WordLink*> chain;
  for (std::int32_t l = final.link; l >= 0; l = links[std::size_t(l)].prev) chain.push_back(&links[std::size_t(l)]);
  std::reverse(chain.begin(), chain.end());
  Eigen::Index begin = 0;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const std::string& w = rn.words().labels[std::size_t(chain[k]->word)];
    const Eigen::Index end = k + 1 == chain.size() ? T : chain[k]->end_frame;
    hyp.raw_words.push_back(w);
    hyp.word_times.push_back({w, begin, end});
    begin = end;
  }
  hyp.words = rn.lexicon().expand(hyp.raw_words);
  return gate(std::move(hyp), cfg.frame_prob_threshold);
}

double frame_probability(const Hypothesis& hyp) {
  return hyp.frames > 0 ? hyp.total_logprob / double(hyp.frames) : kLogZero<double>;
}

Hypothesis gate(Hypothesis hyp, double threshold) {
  hyp.frame_probability = frame_probability(hyp);
  hyp.accepted = hyp.frame_probability > threshold;
  return hyp;
}

// ---------------------------------------------------------------------------
// Endpointing

std::vector<FrameRange> endpoint(const Waveform& w, const DecodeConfig& cfg) {
  cfg.validate();
  const std::vector<double> level = frame_levels(w, 10.0);
  const std::size_t n_frames = level.size();
  if (n_frames == 0) return {};
  const double floor = std::max(level_percentile(level, 0.1), cfg.endpoint_floor_db);
  const double threshold = floor + cfg.endpoint_margin_db;

  std::vector<FrameRange> runs;
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (level[f] <= threshold) continue;
    if (!runs.empty() && runs.back().end == f)
      runs.back().end = f + 1;
    else
      runs.push_back({f, f + 1});
  }
  const auto min_silence = static_cast<std::size_t>(std::ceil(cfg.endpoint_min_silence_ms / 10.0));
  const auto min_speech = static_cast<std::size_t>(std::ceil(cfg.endpoint_min_speech_ms / 10.0));
  std::vector<FrameRange> bridged;
  for (const auto& r : runs) {
    if (!bridged.empty() && r.begin - bridged.back().end < min_silence)
      bridged.back().end = r.end;
    else
      bridged.push_back(r);
  }
  std::vector<FrameRange> out;
  for (const auto& r : bridged)
    if (r.end - r.begin >= min_speech) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Sessions

DecodeStatus status_of(const std::optional<Hypothesis>& hyp) {
  if (!hyp) return DecodeStatus::no_parse;
  return hyp->accepted ? DecodeStatus::accepted : DecodeStatus::rejected;
}

const char* to_string(DecodeStatus s) {
  switch (s) {
    case DecodeStatus::accepted: return "accepted";
    case DecodeStatus::rejected: return "rejected";
    case DecodeStatus::no_parse: return "noparse";
  }
  return "?";
}

std::string waveform_digest(const Waveform& w) {
  return content_digest(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(w.samples.data()), w.samples.size() * sizeof(std::int16_t)));
}

namespace {

std::string join_words(const WordSequence& words) {
  if (words.empty()) return "-";
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

WordSequence split_words(const std::string& field) {
  if (field == "-") return {};
  return split_whitespace(field);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void record_session(const std::vector<SessionEntry>& entries, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec || !std::filesystem::is_directory(directory))
    throw Error("cannot create session directory " + directory.string());
  std::ostringstream log;
  log << "# id\tstatus\tframes\ttotal_logprob\tframe_probability\tsample_rate\tdigest\traw_words\twords\treference\n";
  for (const auto& e : entries) {
    write_waveform(e.waveform, directory / (e.id + ".htk"), WaveFormat::raw);
    write_param_file(e.features, directory / (e.id + ".mfc"));
    const auto status = status_of(e.hypothesis);
    log << e.id << '\t' << to_string(status) << '\t' << e.features.size() << '\t'
        << (e.hypothesis ? num(e.hypothesis->total_logprob) : "-") << '\t'
        << (e.hypothesis ? num(e.hypothesis->frame_probability) : "-") << '\t' << e.waveform.sample_rate_hz
        << '\t' << waveform_digest(e.waveform) << '\t'
        << (e.hypothesis ? join_words(e.hypothesis->raw_words) : "-") << '\t'
        << (e.hypothesis ? join_words(e.hypothesis->words) : "-") << '\t'
        << (e.reference ? join_words(*e.reference) : "?") << '\n';
  }
  write_text_file(directory / kSessionLog, log.str());
}

std::vector<SessionRecord> read_session(const std::filesystem::path& directory) {
  const auto path = directory / kSessionLog;
  std::istringstream in(read_text_file(path));
  std::vector<SessionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const auto fail = [&] { return FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed entry"); };
    if (f.size() != 10) throw fail();
    SessionRecord r;
    r.id = f[0];
    if (f[1] == "accepted") r.status = DecodeStatus::accepted;
    else if (f[1] == "rejected") r.status = DecodeStatus::rejected;
    else if (f[1] == "noparse") r.status = DecodeStatus::no_parse;
    else throw fail();
    try {
      r.frames = std::stol(f[2]);
      if (f[3] != "-") r.total_logprob = std::stod(f[3]);
      if (f[4] != "-") r.frame_probability = std::stod(f[4]);
      r.sample_rate_hz = std::stoi(f[5]);
    } catch (const std::logic_error&) {
      throw fail();
    }
    r.digest = f[6];
    r.raw_words = split_words(f[7]);
    r.words = split_words(f[8]);
    if (f[9] != "?") r.reference = split_words(f[9]);
    r.waveform_path = directory / (r.id + ".htk");
    r.features_path = directory / (r.id + ".mfc");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace svasr
