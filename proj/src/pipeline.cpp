#include "svasr/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "svasr/evaluate.hpp"
#include "svasr/lingua.hpp"
#include "svasr/util.hpp"

namespace svasr {

namespace {

// ---------------------------------------------------------------------------
// Config values

[[noreturn]] void bad_value(const std::string& value, const char* expected) {
  throw ConfigError(std::string("expected ") + expected + ", got '" + value + "'");
}

long long to_integer(const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(v, "an integer");
  return out;
}

double to_real(const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::logic_error&) {
  }
  bad_value(v, "a number");
}

bool to_flag(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  bad_value(v, "true or false");
}

std::string real_text(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T>
Field integer_field(T PipelineConfig::*section, int T::*member) {
  return {[=](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
            (c.*section).*member = static_cast<int>(to_integer(v));
          },
          [=](const PipelineConfig& c) { return std::to_string((c.*section).*member); }};
}

template <class T>
Field real_field(T PipelineConfig::*section, double T::*member) {
  return {[=](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
            (c.*section).*member = to_real(v);
          },
          [=](const PipelineConfig& c) { return real_text((c.*section).*member); }};
}

template <class T>
Field flag_field(T PipelineConfig::*section, bool T::*member) {
  return {[=](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
            (c.*section).*member = to_flag(v);
          },
          [=](const PipelineConfig& c) { return std::string((c.*section).*member ? "true" : "false"); }};
}

Field path_field(std::filesystem::path PipelineConfig::*member) {
  return {[=](PipelineConfig& c, const std::string& v, const std::filesystem::path& base) {
            const std::filesystem::path p(v);
            c.*member = p.is_absolute() || base.empty() ? p : base / p;
          },
          [=](const PipelineConfig& c) { return (c.*member).generic_string(); }};
}

const std::map<std::string, Field>& fields() {
  using C = PipelineConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["paths.grammar"] = path_field(&C::grammar);
    t["paths.lexicon"] = path_field(&C::lexicon);
    t["paths.corpus"] = path_field(&C::corpus);
    t["paths.features"] = path_field(&C::features);
    t["paths.manifest"] = path_field(&C::manifest);
    t["paths.models"] = path_field(&C::models);
    t["paths.train_log"] = path_field(&C::train_log);
    t["paths.pca_model"] = path_field(&C::pca_model);
    t["paths.session"] = path_field(&C::session);

    t["audio.format"] = {[](C& c, const std::string& v, const auto&) {
                           if (v == "raw") c.wave_format = WaveFormat::raw;
                           else if (v == "htk") c.wave_format = WaveFormat::htk_headered;
                           else bad_value(v, "raw or htk");
                         },
                         [](const C& c) { return std::string(c.wave_format == WaveFormat::raw ? "raw" : "htk"); }};
    t["audio.byte_order"] = {[](C& c, const std::string& v, const auto&) {
                               if (v == "little") c.byte_order = ByteOrder::little;
                               else if (v == "big") c.byte_order = ByteOrder::big;
                               else bad_value(v, "little or big");
                             },
                             [](const C& c) { return std::string(c.byte_order == ByteOrder::little ? "little" : "big"); }};
    t["audio.sample_rate_hz"] = integer_field(&C::synth, &SynthConfig::sample_rate_hz);

    t["mfcc.pre_emphasis"] = real_field(&C::mfcc, &MfccConfig::pre_emphasis);
    t["mfcc.window_samples"] = integer_field(&C::mfcc, &MfccConfig::window_samples);
    t["mfcc.stride_samples"] = integer_field(&C::mfcc, &MfccConfig::stride_samples);
    t["mfcc.dft_size"] = integer_field(&C::mfcc, &MfccConfig::dft_size);
    t["mfcc.n_filters"] = integer_field(&C::mfcc, &MfccConfig::n_filters);
    t["mfcc.n_cepstra"] = integer_field(&C::mfcc, &MfccConfig::n_cepstra);
    t["mfcc.include_c0"] = flag_field(&C::mfcc, &MfccConfig::include_c0);
    t["mfcc.delta_window"] = integer_field(&C::mfcc, &MfccConfig::delta_window);
    t["mfcc.log_floor"] = real_field(&C::mfcc, &MfccConfig::log_floor);

    t["pca.enabled"] = {[](C& c, const std::string& v, const auto&) { c.pca_enabled = to_flag(v); },
                        [](const C& c) { return std::string(c.pca_enabled ? "true" : "false"); }};
    t["pca.k"] = {[](C& c, const std::string& v, const auto&) { c.pca_k = to_integer(v); },
                  [](const C& c) { return std::to_string(c.pca_k); }};

    t["train.max_init_iters"] = integer_field(&C::train, &TrainConfig::max_init_iters);
    t["train.max_bw_iters"] = integer_field(&C::train, &TrainConfig::max_bw_iters);
    t["train.converge_epsilon"] = real_field(&C::train, &TrainConfig::converge_epsilon);
    t["train.variance_floor_scale"] = real_field(&C::train, &TrainConfig::variance_floor_scale);
    t["train.fixed_variance"] = flag_field(&C::train, &TrainConfig::fixed_variance);
    t["train.min_segments"] = integer_field(&C::train, &TrainConfig::min_segments);
    t["train.mixtures"] = integer_field(&C::train, &TrainConfig::mixtures);
    t["train.states_per_phone"] = integer_field(&C::train, &TrainConfig::states_per_phone);
    t["train.tee_prob"] = real_field(&C::train, &TrainConfig::tee_prob);
    t["train.tee_phones"] = {[](C& c, const std::string& v, const auto&) {
                               const auto names = split_whitespace(v);
                               c.train.tee_phones = {names.begin(), names.end()};
                             },
                             [](const C& c) {
                               std::string out;
                               for (const auto& p : c.train.tee_phones) out += (out.empty() ? "" : " ") + p;
                               return out;
                             }};

    t["decode.beam"] = real_field(&C::decode, &DecodeConfig::beam_logwidth);
    t["decode.threshold"] = real_field(&C::decode, &DecodeConfig::frame_prob_threshold);
    t["decode.endpoint_margin_db"] = real_field(&C::decode, &DecodeConfig::endpoint_margin_db);
    t["decode.endpoint_min_speech_ms"] = real_field(&C::decode, &DecodeConfig::endpoint_min_speech_ms);
    t["decode.endpoint_min_silence_ms"] = real_field(&C::decode, &DecodeConfig::endpoint_min_silence_ms);
    t["decode.endpoint_floor_db"] = real_field(&C::decode, &DecodeConfig::endpoint_floor_db);

    t["synth.phone_duration_ms"] = real_field(&C::synth, &SynthConfig::phone_duration_ms);
    t["synth.noise_amplitude"] = real_field(&C::synth, &SynthConfig::noise_amplitude);
    t["synth.tone_amplitude"] = real_field(&C::synth, &SynthConfig::tone_amplitude);
    t["synth.edge_ramp_ms"] = real_field(&C::synth, &SynthConfig::edge_ramp_ms);
    t["synth.max_words"] = {[](C& c, const std::string& v, const auto&) {
                              const auto n = to_integer(v);
                              if (n < 0) bad_value(v, "a non-negative integer");
                              c.synth.max_words = std::size_t(n);
                            },
                            [](const C& c) { return std::to_string(c.synth.max_words); }};
    t["synth.silence_phone"] = {[](C& c, const std::string& v, const auto&) { c.synth.silence_phone = v; },
                                [](const C& c) { return c.synth.silence_phone; }};

    t["switch.endpoint"] = {[](C& c, const std::string& v, const auto&) { c.switch_endpoint = v; },
                            [](const C& c) { return c.switch_endpoint; }};
    t["switch.count"] = {[](C& c, const std::string& v, const auto&) {
                           c.switch_count = static_cast<int>(to_integer(v));
                         },
                         [](const C& c) { return std::to_string(c.switch_count); }};
    t["switch.names"] = {[](C& c, const std::string& v, const auto&) {
                           c.switch_names.clear();
                           for (const auto& item : split_whitespace(v)) {
                             const auto colon = item.find(':');
                             if (colon == std::string::npos || colon == 0)
                               bad_value(v, "NAME:id pairs");
                             c.switch_names[item.substr(0, colon)] =
                                 static_cast<int>(to_integer(item.substr(colon + 1)));
                           }
                         },
                         [](const C& c) {
                           std::string out;
                           for (const auto& [name, id] : c.switch_names)
                             out += (out.empty() ? "" : " ") + name + ":" + std::to_string(id);
                           return out;
                         }};
    return t;
  }();
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void PipelineConfig::validate() const {
  mfcc.validate();
  train.validate();
  decode.validate();
  if (pca_k < 0) throw ConfigError("pca.k must not be negative");
  if (synth.phone_duration_ms <= 0.0 || synth.noise_amplitude < 0.0 || synth.tone_amplitude < 0.0 ||
      synth.edge_ramp_ms < 0.0 || synth.sample_rate_hz <= 0)
    throw ConfigError("synth settings out of range");
  make_bank();
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  const auto resolve = [&](std::filesystem::path& p) {
    if (!base_dir.empty() && p.is_relative()) p = base_dir / p;
  };
  for (auto* p : {&cfg.corpus, &cfg.features, &cfg.manifest, &cfg.models, &cfg.train_log, &cfg.pca_model,
                  &cfg.session})
    resolve(*p);

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->second.set(cfg, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_text_file(path), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

namespace {

GrammarAst load_grammar(const PipelineConfig& cfg) {
  if (cfg.grammar.empty()) throw ConfigError("paths.grammar is not set");
  return parse_grammar(read_text_file(cfg.grammar));
}

Lexicon load_lexicon(const PipelineConfig& cfg) {
  if (cfg.lexicon.empty()) throw ConfigError("paths.lexicon is not set");
  return parse_lexicon(read_text_file(cfg.lexicon));
}

std::map<std::string, PhoneSignature> signatures_for(const Lexicon& lex, const SynthConfig& sc) {
  auto phones = phone_inventory(lex);
  phones.push_back(sc.silence_phone);
  std::sort(phones.begin(), phones.end());
  phones.erase(std::unique(phones.begin(), phones.end()), phones.end());
  return assign_phone_signatures(phones, sc.sample_rate_hz);
}

std::string join(const WordSequence& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

std::filesystem::path relative_to(const std::filesystem::path& p, const std::filesystem::path& dir) {
  const auto rel = std::filesystem::relative(p, dir.empty() ? std::filesystem::path(".") : dir);
  return rel.empty() ? p : rel;
}

TrainingCorpus with_pca(TrainingCorpus corpus, const PipelineConfig& cfg) {
  if (!cfg.pca_enabled) return corpus;
  const PcaModel model = read_pca(cfg.pca_model);
  for (auto& u : corpus.utterances) u.features = transform_pca(model, u.features);
  return corpus;
}

TrainReport train_and_write(const PipelineConfig& cfg, const TrainingCorpus& raw_corpus, std::ostream& log) {
  const TrainingCorpus corpus = with_pca(raw_corpus, cfg);
  const Lexicon lex = load_lexicon(cfg);
  TrainReport report = train_all(corpus, lex, cfg.train);
  for (const auto& w : report.warnings) log << "warning: " << w << '\n';

  std::filesystem::create_directories(cfg.models.parent_path().empty() ? "." : cfg.models.parent_path());
  write_hmmset(report.models, cfg.models);
  std::ostringstream tl;
  tl << "# phone iteration log_likelihood\n" << std::setprecision(17);
  for (const auto& [phone, lls] : report.log_likelihoods)
    for (std::size_t i = 0; i < lls.size(); ++i) tl << phone << ' ' << i + 1 << ' ' << lls[i] << '\n';
  std::filesystem::create_directories(cfg.train_log.parent_path().empty() ? "." : cfg.train_log.parent_path());
  write_text_file(cfg.train_log, tl.str());
  log << "trained " << report.models.models.size() << " phone models on " << corpus.utterances.size()
      << " utterances -> " << cfg.models.string() << '\n';
  return report;
}

Hypothesis from_record(const SessionRecord& r) {
  Hypothesis h;
  h.words = r.words;
  h.raw_words = r.raw_words;
  h.total_logprob = r.total_logprob;
  h.frame_probability = r.frame_probability;
  h.frames = r.frames;
  h.accepted = r.status == DecodeStatus::accepted;
  return h;
}

void log_entry(std::ostream& log, const SessionEntry& e) {
  log << e.id << ' ' << to_string(status_of(e.hypothesis));
  if (e.hypothesis)
    log << ' ' << std::fixed << std::setprecision(4) << e.hypothesis->frame_probability << std::defaultfloat
        << ' ' << join(e.hypothesis->words);
  log << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------

SynthResult cmd_synth(const PipelineConfig& cfg, std::size_t count, std::uint64_t seed, std::ostream& log) {
  const WordNetwork net = compile_network(load_grammar(cfg));
  const Lexicon lex = load_lexicon(cfg);
  const auto sentences = enumerate_sentences(net, cfg.synth.max_words);
  if (sentences.empty())
    throw DomainError("grammar has no sentence of at most " + std::to_string(cfg.synth.max_words) + " words");
  const std::vector<WordSequence> pool(sentences.begin(), sentences.end());
  const auto signatures = signatures_for(lex, cfg.synth);

  std::filesystem::create_directories(cfg.corpus);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  SynthResult result;
  std::ostringstream list;
  std::vector<std::pair<std::string, WordSequence>> transcripts;
  for (std::size_t i = 0; i < count; ++i) {
    std::ostringstream id;
    id << "utt" << std::setw(4) << std::setfill('0') << i;
    SynthSpec spec;
    spec.word_sequence = pool[pick(rng)];
    spec.phone_signatures = signatures;
    spec.phone_duration_ms = cfg.synth.phone_duration_ms;
    spec.noise_amplitude = cfg.synth.noise_amplitude;
    spec.tone_amplitude = cfg.synth.tone_amplitude;
    spec.edge_ramp_ms = cfg.synth.edge_ramp_ms;
    spec.sample_rate_hz = cfg.synth.sample_rate_hz;
    spec.silence_phone = cfg.synth.silence_phone;
    spec.seed = rng();
    const SynthUtterance u = synthesize_utterance(spec, lex);
    write_waveform(u.waveform, cfg.corpus / (id.str() + ".htk"), cfg.wave_format, cfg.byte_order);
    write_labels(u.labels, cfg.corpus / (id.str() + ".lab"));
    list << id.str() << ".htk " << id.str() << ".lab\n";
    transcripts.emplace_back(id.str(), spec.word_sequence);
    log << id.str() << ' ' << join(spec.word_sequence) << '\n';
    result.ids.push_back(id.str());
    result.sentences.push_back(spec.word_sequence);
  }
  write_text_file(cfg.corpus / kWaveList, list.str());
  write_transcripts(cfg.corpus / kTranscripts, transcripts);
  return result;
}

FeatsResult cmd_feats(const PipelineConfig& cfg, const std::filesystem::path& wave_list, std::ostream& log) {
  cfg.mfcc.validate();
  std::istringstream in(read_text_file(wave_list));
  const auto list_dir = wave_list.parent_path();
  const auto manifest_dir = cfg.manifest.parent_path();
  std::filesystem::create_directories(cfg.features);
  if (!manifest_dir.empty()) std::filesystem::create_directories(manifest_dir);

  std::ostringstream mfcc_text;
  mfcc_text << std::setprecision(17) << cfg.mfcc.pre_emphasis << ' ' << cfg.mfcc.window_samples << ' '
            << cfg.mfcc.stride_samples << ' ' << cfg.mfcc.dft_size << ' ' << cfg.mfcc.n_filters << ' '
            << cfg.mfcc.n_cepstra << ' ' << cfg.mfcc.include_c0 << ' ' << cfg.mfcc.delta_window << ' '
            << cfg.mfcc.log_floor << ' ' << cfg.synth.sample_rate_hz;

  FeatsResult result;
  std::vector<ManifestEntry> manifest;
  std::set<std::string> stems;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    const auto wave_path = list_dir / tokens[0];
    const std::string stem = wave_path.stem().string();
    if (!stems.insert(stem).second) throw DomainError("duplicate utterance name " + stem + " in " + wave_list.string());
    const auto out_path = cfg.features / (stem + ".mfc");
    const auto sidecar = cfg.features / (stem + ".mfc.digest");

    Waveform w;
    std::string digest;
    try {
      const auto bytes = read_binary_file(wave_path);
      digest = content_digest(content_digest(bytes) + "|" + mfcc_text.str());
      w = read_waveform(wave_path, cfg.wave_format, cfg.byte_order, cfg.synth.sample_rate_hz);
    } catch (const Error& e) {
      throw Error(wave_path.string() + ": " + e.what());
    }
    const bool fresh = std::filesystem::exists(out_path) && std::filesystem::exists(sidecar) &&
                       trim(read_text_file(sidecar)) == digest;
    if (fresh) {
      ++result.skipped;
    } else {
      FeatureSequence seq;
      try {
        seq = extract_features(w, cfg.mfcc);
      } catch (const Error& e) {
        throw Error(wave_path.string() + ": " + e.what());
      }
      write_param_file(seq, out_path);
      write_text_file(sidecar, digest + "\n");
      ++result.computed;
      log << stem << " -> " << out_path.string() << " (" << seq.size() << " frames)\n";
    }
    if (tokens.size() > 1)
      manifest.push_back({relative_to(out_path, manifest_dir), relative_to(list_dir / tokens[1], manifest_dir),
                          waveform_digest(w)});
  }
  write_corpus_manifest(cfg.manifest, manifest);
  log << result.computed << " computed, " << result.skipped << " up to date\n";
  return result;
}

PcaModel cmd_pca(const PipelineConfig& cfg, Eigen::Index k, std::ostream& log) {
  const TrainingCorpus corpus = read_corpus_manifest(cfg.manifest);
  std::vector<FeatureSequence> seqs;
  for (const auto& u : corpus.utterances) seqs.push_back(u.features);
  const PcaModel model = fit_pca(seqs, k);
  if (!cfg.pca_model.parent_path().empty()) std::filesystem::create_directories(cfg.pca_model.parent_path());
  write_pca(model, cfg.pca_model);
  log << "pca: kept " << k << " of " << model.mean.size() << " dimensions, eigenvalues";
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) log << ' ' << model.eigenvalues[i];
  log << '\n';
  return model;
}

TrainReport cmd_train(const PipelineConfig& cfg, std::ostream& log) {
  return train_and_write(cfg, read_corpus_manifest(cfg.manifest), log);
}

FeatureSequence Recognizer::features(const Waveform& w) const { return extract_features(w, mfcc); }

std::optional<Hypothesis> Recognizer::recognize(const FeatureSequence& raw_features) const {
  const FeatureSequence seq = pca ? transform_pca(*pca, raw_features) : raw_features;
  if (seq.dim() != network.dim())
    throw DomainError("feature dimension " + std::to_string(seq.dim()) + " does not match model dimension " +
                      std::to_string(network.dim()));
  return svasr::decode(network, seq, decode);
}

Recognizer load_recognizer(const PipelineConfig& cfg) {
  const WordNetwork net = compile_network(load_grammar(cfg));
  const Lexicon lex = load_lexicon(cfg);
  const HmmSet models = read_hmmset(cfg.models);
  std::optional<PcaModel> pca;
  if (cfg.pca_enabled) pca = read_pca(cfg.pca_model);
  return {build_recognition_network(net, lex, models), std::move(pca), cfg.mfcc, cfg.decode};
}

namespace {

int worse(int a, int b) {
  const auto rank = [](int c) { return c == kExitNoParse ? 2 : c == kExitRejected ? 1 : 0; };
  return rank(a) >= rank(b) ? a : b;
}

int exit_code_of(const std::optional<Hypothesis>& h) {
  switch (status_of(h)) {
    case DecodeStatus::accepted: return kExitOk;
    case DecodeStatus::rejected: return kExitRejected;
    case DecodeStatus::no_parse: return kExitNoParse;
  }
  return kExitNoParse;
}

}  // namespace

DecodeResult cmd_decode(const PipelineConfig& cfg, const std::vector<std::filesystem::path>& waves,
                        const std::optional<std::filesystem::path>& transcripts, std::ostream& log,
                        CommandChannel* dispatch_to) {
  const Recognizer rec = load_recognizer(cfg);
  std::map<std::string, WordSequence> refs;
  if (transcripts)
    for (auto& [id, words] : read_transcripts(*transcripts)) refs[id] = std::move(words);
  const SwitchBank layout = cfg.make_bank();

  DecodeResult result;
  std::set<std::string> ids;
  for (const auto& path : waves) {
    SessionEntry e;
    e.id = path.stem().string();
    if (!ids.insert(e.id).second) throw DomainError("duplicate utterance name " + e.id);
    try {
      e.waveform = read_waveform(path, cfg.wave_format, cfg.byte_order, cfg.synth.sample_rate_hz);
    } catch (const Error& err) {
      throw Error(path.string() + ": " + err.what());
    }
    e.features = rec.features(e.waveform);
    e.hypothesis = rec.recognize(e.features);
    if (auto it = refs.find(e.id); it != refs.end()) e.reference = it->second;
    log_entry(log, e);
    if (dispatch_to && e.hypothesis) {
      const auto outcome = dispatch(*e.hypothesis, layout, *dispatch_to);
      for (const auto& s : outcome.sent) log << "  " << format_command(s.command) << " -> " << s.reply << '\n';
      for (const auto& note : outcome.log) log << "  " << note << '\n';
    }
    result.exit_code = worse(result.exit_code, exit_code_of(e.hypothesis));
    result.entries.push_back(std::move(e));
  }
  record_session(result.entries, cfg.session);
  return result;
}

ScoreReport cmd_score(const PipelineConfig&, const std::filesystem::path& session,
                      const std::optional<std::filesystem::path>& transcripts, std::ostream& log) {
  std::map<std::string, WordSequence> refs;
  if (transcripts)
    for (auto& [id, words] : read_transcripts(*transcripts)) refs[id] = std::move(words);
  std::vector<ScoredUtterance> items;
  for (const auto& r : read_session(session)) {
    std::optional<WordSequence> ref = r.reference;
    if (transcripts) {
      auto it = refs.find(r.id);
      ref = it == refs.end() ? std::nullopt : std::optional(it->second);
    }
    if (!ref) {
      log << "warning: no reference for " << r.id << ", not scored\n";
      continue;
    }
    std::optional<Hypothesis> hyp;
    if (r.status != DecodeStatus::no_parse) hyp = from_record(r);
    items.push_back({r.id, *ref, hyp});
  }
  if (items.empty()) throw DomainError("nothing to score in " + session.string());
  const ScoreReport report = score(items);
  log << format_report(report);
  write_text_file(session / "score.jsonl", format_report_jsonl(report));
  return report;
}

RefineResult cmd_refine(const PipelineConfig& cfg, const std::filesystem::path& session,
                        const std::filesystem::path& label_dir, std::ostream& log) {
  RefineResult result;
  const TrainingCorpus before = read_corpus_manifest(cfg.manifest);
  const TrainingCorpus after = capture_errors(session, label_dir, before, &result.captured);
  log << "captured " << result.captured.size() << " failed utterance(s)";
  for (const auto& id : result.captured) log << ' ' << id;
  log << '\n';

  if (!result.captured.empty()) {
    const auto dir = cfg.features / "captured";
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> entries;
    const auto manifest_dir = cfg.manifest.parent_path();
    std::string appended;
    for (std::size_t i = before.utterances.size(); i < after.utterances.size(); ++i) {
      const Utterance& u = after.utterances[i];
      const auto feat = dir / (u.id + ".mfc");
      const auto lab = dir / (u.id + ".lab");
      write_param_file(u.features, feat);
      write_labels(u.labels, lab);
      appended += relative_to(feat, manifest_dir).generic_string() + ' ' +
                  relative_to(lab, manifest_dir).generic_string() + ' ' + u.digest + '\n';
    }
    write_text_file(cfg.manifest, read_text_file(cfg.manifest) + appended);
  }

  result.training = train_and_write(cfg, after, log);

  const Recognizer rec = load_recognizer(cfg);
  std::vector<ScoredUtterance> items;
  for (const auto& r : read_session(session)) {
    SessionEntry e;
    e.id = r.id;
    e.waveform = read_waveform(r.waveform_path, WaveFormat::raw, ByteOrder::little, r.sample_rate_hz);
    e.features = read_param_file(r.features_path);
    e.hypothesis = rec.recognize(e.features);
    e.reference = r.reference;
    log_entry(log, e);
    if (e.reference) items.push_back({e.id, *e.reference, e.hypothesis});
    result.retest.push_back(std::move(e));
  }
  record_session(result.retest, session / "retest");
  if (!items.empty()) {
    result.report = score(items);
    log << format_report(result.report);
  }
  return result;
}

}  // namespace svasr
