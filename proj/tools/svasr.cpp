// svasr: pipeline driver. Each subcommand reads one key=value config file.

#include <csignal>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "svasr/audio.hpp"
#include "svasr/decoder.hpp"
#include "svasr/dispatch.hpp"
#include "svasr/pipeline.hpp"
#include "svasr/util.hpp"

namespace fs = std::filesystem;
using namespace svasr;

namespace {

/// Waveform paths of a "<wave> [<labels>]" list; only the first column is used.
std::vector<fs::path> read_wave_list(const fs::path& list) {
  std::vector<fs::path> out;
  std::istringstream in(read_text_file(list));
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tokens = split_whitespace(line);
    if (!tokens.empty()) out.push_back(list.parent_path() / tokens[0]);
  }
  return out;
}

int serve(const PipelineConfig& cfg, const std::string& endpoint) {
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  auto server = serve_switch_bank(endpoint, cfg.make_bank());
  std::cout << "listening on port " << server->port() << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server->stop();
  std::cout << "served " << server->request_count() << " requests\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-vocabulary speech recognition pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "key=value configuration file");

  std::size_t synth_count = 60;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled corpus");
  synth->add_option("-n,--count", synth_count, "number of utterances")->capture_default_str();
  synth->add_option("-s,--seed", synth_seed, "random seed")->capture_default_str();

  std::string feats_list;
  auto* feats = app.add_subcommand("feats", "convert waveforms to MFCC_0_D_A parameter files");
  feats->add_option("-l,--list", feats_list, "waveform list (default: <corpus>/waves.list)");

  Eigen::Index pca_k = 0;
  auto* pca = app.add_subcommand("pca", "fit a PCA model on the training features");
  pca->add_option("-k", pca_k, "components to keep (default: pca.k)");

  auto* train = app.add_subcommand("train", "initialise and re-estimate every phone model");

  std::vector<std::string> decode_inputs;
  std::string decode_list, decode_refs;
  std::optional<double> threshold;
  bool decode_dispatch = false;
  auto* decode_cmd = app.add_subcommand("decode", "recognise waveforms and record a session");
  decode_cmd->add_option("waves", decode_inputs, "waveform files");
  decode_cmd->add_option("-l,--list", decode_list, "waveform list");
  decode_cmd->add_option("-r,--ref", decode_refs, "reference transcripts");
  decode_cmd->add_option("-t,--threshold", threshold, "frame-probability threshold (overrides decode.threshold)");
  decode_cmd->add_flag("--dispatch", decode_dispatch, "send accepted commands to the switch bank");

  std::string score_session, score_refs;
  auto* score_cmd = app.add_subcommand("score", "score a recorded session");
  score_cmd->add_option("-S,--session", score_session, "session directory (default: paths.session)");
  score_cmd->add_option("-r,--ref", score_refs, "reference transcripts (default: references in the session log)");

  std::string refine_session, refine_labels;
  auto* refine = app.add_subcommand("refine", "add session failures to the corpus, retrain and retest");
  refine->add_option("-S,--session", refine_session, "session directory (default: paths.session)");
  refine->add_option("-L,--labels", refine_labels, "directory of corrected <id>.lab files")->required();

  std::string endpoint;
  auto* serve_cmd = app.add_subcommand("serve", "run the simulated switch bank");
  serve_cmd->add_option("-e,--endpoint", endpoint, "host:port (default: switch.endpoint)");

  std::vector<std::string> client_lines;
  auto* client = app.add_subcommand("client", "send protocol lines to the switch bank");
  client->add_option("-e,--endpoint", endpoint, "host:port (default: switch.endpoint)");
  client->add_option("lines", client_lines, "request lines, e.g. GETALL")->required();

  std::vector<std::string> level_inputs;
  double level_scale = 1.0;
  auto* level = app.add_subcommand("level", "meter levels and endpoint ranges of waveforms");
  level->add_option("waves", level_inputs, "waveform files")->required();
  level->add_option("--scale", level_scale, "volume scale applied first")->capture_default_str();

  auto* show = app.add_subcommand("config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const PipelineConfig cfg = config_path.empty() ? parse_config("", fs::current_path()) : load_config(config_path);
    auto& log = std::cout;

    if (*synth) {
      cmd_synth(cfg, synth_count, synth_seed, log);
    } else if (*feats) {
      cmd_feats(cfg, feats_list.empty() ? cfg.corpus / kWaveList : fs::path(feats_list), log);
    } else if (*pca) {
      const Eigen::Index k = pca_k > 0 ? pca_k : cfg.pca_k;
      if (k <= 0) {
        std::cerr << "pca: give -k or set pca.k\n";
        return kExitUsage;
      }
      cmd_pca(cfg, k, log);
    } else if (*train) {
      cmd_train(cfg, log);
    } else if (*decode_cmd) {
      std::vector<fs::path> waves(decode_inputs.begin(), decode_inputs.end());
      if (!decode_list.empty())
        for (auto& p : read_wave_list(decode_list)) waves.push_back(p);
      if (waves.empty()) {
        std::cerr << "decode: no input waveforms\n";
        return kExitUsage;
      }
      PipelineConfig run = cfg;
      if (threshold) run.decode.frame_prob_threshold = *threshold;
      std::optional<fs::path> refs;
      if (!decode_refs.empty()) refs = decode_refs;
      std::unique_ptr<SwitchBankClient> channel;
      if (decode_dispatch) channel = std::make_unique<SwitchBankClient>(cfg.switch_endpoint);
      return cmd_decode(run, waves, refs, log, channel.get()).exit_code;
    } else if (*score_cmd) {
      std::optional<fs::path> refs;
      if (!score_refs.empty()) refs = score_refs;
      cmd_score(cfg, score_session.empty() ? cfg.session : fs::path(score_session), refs, log);
    } else if (*refine) {
      cmd_refine(cfg, refine_session.empty() ? cfg.session : fs::path(refine_session), refine_labels, log);
    } else if (*serve_cmd) {
      return serve(cfg, endpoint.empty() ? cfg.switch_endpoint : endpoint);
    } else if (*client) {
      SwitchBankClient channel(endpoint.empty() ? cfg.switch_endpoint : endpoint);
      for (const auto& line : client_lines) log << channel.request(line) << '\n';
    } else if (*level) {
      for (const auto& path : level_inputs) {
        Waveform w = read_waveform(path, cfg.wave_format, cfg.byte_order, cfg.synth.sample_rate_hz);
        if (level_scale != 1.0) w = scale_volume(w, level_scale);
        const LevelReading r = meter_levels(w);
        log << path << ": S+N " << r.speech_plus_noise_db << " dB, N " << r.noise_db << " dB, speech";
        for (const auto& range : svasr::endpoint(w, cfg.decode)) log << " [" << range.begin << "," << range.end << ")";
        log << '\n';
      }
    } else if (*show) {
      log << format_config(cfg);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
