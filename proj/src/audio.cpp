#include "svasr/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "svasr/error.hpp"
#include "svasr/lingua.hpp"
#include "svasr/util.hpp"

namespace svasr {
namespace {

constexpr std::size_t kHtkHeaderBytes = 12;
constexpr std::int16_t kWaveformKind = 0;

std::uint32_t load_u32(const std::uint8_t* p, ByteOrder order) {
  if (order == ByteOrder::little)
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  return std::uint32_t(p[3]) | std::uint32_t(p[2]) << 8 | std::uint32_t(p[1]) << 16 |
         std::uint32_t(p[0]) << 24;
}

std::uint16_t load_u16(const std::uint8_t* p, ByteOrder order) {
  return order == ByteOrder::little ? std::uint16_t(p[0] | p[1] << 8)
                                    : std::uint16_t(p[1] | p[0] << 8);
}

void store_u32(std::vector<std::uint8_t>& out, std::uint32_t v, ByteOrder order) {
  for (int i = 0; i < 4; ++i) {
    int shift = order == ByteOrder::little ? 8 * i : 8 * (3 - i);
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}

void store_u16(std::vector<std::uint8_t>& out, std::uint16_t v, ByteOrder order) {
  if (order == ByteOrder::little) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  } else {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
  }
}

std::int16_t clamp_to_pcm(double v) {
  return static_cast<std::int16_t>(std::clamp(std::round(v), -32768.0, 32767.0));
}

}  // namespace

std::int32_t htk_sample_period(int sample_rate_hz) {
  if (sample_rate_hz <= 0) throw DomainError("sample rate must be positive");
  return static_cast<std::int32_t>(std::lround(1e7 / sample_rate_hz));
}

Waveform read_waveform(const std::filesystem::path& path, WaveFormat format, ByteOrder order,
                       int raw_sample_rate_hz) {
  const auto bytes = read_binary_file(path);
  Waveform w;
  w.sample_rate_hz = raw_sample_rate_hz;
  std::size_t offset = 0;
  std::size_t expected = 0;
  if (format == WaveFormat::htk_headered) {
    if (bytes.size() < kHtkHeaderBytes) throw FormatError(path.string() + ": truncated HTK header");
    const auto n_samples = static_cast<std::int32_t>(load_u32(bytes.data(), order));
    const auto period = static_cast<std::int32_t>(load_u32(bytes.data() + 4, order));
    const auto samp_size = static_cast<std::int16_t>(load_u16(bytes.data() + 8, order));
    const auto kind = static_cast<std::int16_t>(load_u16(bytes.data() + 10, order));
    if (kind != kWaveformKind)
      throw FormatError(path.string() + ": parameter kind " + std::to_string(kind) +
                        " is not WAVEFORM");
    if (samp_size != 2) throw FormatError(path.string() + ": sample size must be 2 bytes");
    if (n_samples < 0 || period <= 0) throw FormatError(path.string() + ": invalid header");
    w.sample_rate_hz = static_cast<int>(std::lround(1e7 / period));
    offset = kHtkHeaderBytes;
    expected = static_cast<std::size_t>(n_samples);
    if (bytes.size() - offset != 2 * expected)
      throw FormatError(path.string() + ": header declares " + std::to_string(expected) +
                        " samples but body holds " + std::to_string((bytes.size() - offset) / 2));
  } else {
    if (bytes.size() % 2 != 0) throw FormatError(path.string() + ": truncated sample");
    expected = bytes.size() / 2;
  }
  w.samples.resize(expected);
  for (std::size_t i = 0; i < expected; ++i)
    w.samples[i] = static_cast<std::int16_t>(load_u16(bytes.data() + offset + 2 * i, order));
  return w;
}

void write_waveform(const Waveform& w, const std::filesystem::path& path, WaveFormat format,
                    ByteOrder order) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kHtkHeaderBytes + 2 * w.size());
  if (format == WaveFormat::htk_headered) {
    store_u32(bytes, static_cast<std::uint32_t>(w.size()), order);
    store_u32(bytes, static_cast<std::uint32_t>(htk_sample_period(w.sample_rate_hz)), order);
    store_u16(bytes, 2, order);
    store_u16(bytes, static_cast<std::uint16_t>(kWaveformKind), order);
  }
  for (std::int16_t s : w.samples) store_u16(bytes, static_cast<std::uint16_t>(s), order);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Waveform scale_volume(const Waveform& w, double c) {
  if (!(c > 0.0 && c <= 1.0)) throw DomainError("volume scale must lie in (0, 1]");
  Waveform out{std::vector<std::int16_t>(w.size()), w.sample_rate_hz};
  // Half away from zero; |c*x| <= |x| keeps every sample in range.
  std::transform(w.samples.begin(), w.samples.end(), out.samples.begin(),
                 [c](std::int16_t s) { return static_cast<std::int16_t>(std::round(c * s)); });
  return out;
}

double measure_level(std::span<const std::int16_t> samples) {
  if (samples.empty()) throw DomainError("level region is empty");
  double sum_sq = 0.0;
  for (std::int16_t s : samples) sum_sq += double(s) * double(s);
  if (sum_sq == 0.0) return kLevelFloorDb;
  const double rms = std::sqrt(sum_sq / double(samples.size()));
  return std::max(kLevelFloorDb, 20.0 * std::log10(rms));
}

double measure_level(const Waveform& w, SampleRange region) {
  if (region.end > w.size() || region.begin > region.end)
    throw DomainError("level region outside waveform");
  return measure_level(std::span(w.samples).subspan(region.begin, region.size()));
}

std::vector<double> frame_levels(const Waveform& w, double frame_ms) {
  if (frame_ms <= 0.0) throw DomainError("frame length must be positive");
  const auto frame_len =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frame_ms * w.sample_rate_hz / 1000.0)));
  std::vector<double> out(w.size() / frame_len);
  for (std::size_t f = 0; f < out.size(); ++f) out[f] = measure_level(w, {f * frame_len, (f + 1) * frame_len});
  return out;
}

double level_percentile(std::vector<double> levels, double q) {
  if (levels.empty()) return kLevelFloorDb;
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("percentile outside [0, 1]");
  const auto rank = static_cast<std::size_t>(std::floor(q * double(levels.size() - 1)));
  std::nth_element(levels.begin(), levels.begin() + std::ptrdiff_t(rank), levels.end());
  return levels[rank];
}

LevelReading meter_levels(const Waveform& w) {
  const auto levels = frame_levels(w);
  return {level_percentile(levels, 0.9), level_percentile(levels, 0.1)};
}

std::map<std::string, PhoneSignature> assign_phone_signatures(
    const std::vector<std::string>& phones, int sample_rate_hz) {
  constexpr std::size_t kLowSteps = 8;
  std::map<std::string, PhoneSignature> out;
  const double nyquist = sample_rate_hz / 2.0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    PhoneSignature sig{200.0 + 160.0 * double(i % kLowSteps),
                       1800.0 + 600.0 * double(i / kLowSteps) + 75.0 * double(i % kLowSteps)};
    if (sig.high_hz >= nyquist)
      throw DomainError("too many phones for distinct signatures at this sample rate");
    out[phones[i]] = sig;
  }
  return out;
}

SynthUtterance synthesize_utterance(const SynthSpec& spec, const Lexicon& lexicon) {
  if (spec.sample_rate_hz <= 0 || spec.phone_duration_ms <= 0.0 || spec.noise_amplitude < 0.0 ||
      spec.edge_ramp_ms < 0.0)
    throw DomainError("invalid synthesis parameters");
  std::mt19937_64 rng(spec.seed);

  std::vector<std::string> phones;
  for (const auto& word : spec.word_sequence) {
    if (!lexicon.contains(word)) throw DomainError("word '" + word + "' not in lexicon");
    const auto& prons = lexicon.pronunciations(word);
    std::size_t pick = 0;
    if (prons.size() > 1) pick = std::uniform_int_distribution<std::size_t>(0, prons.size() - 1)(rng);
    phones.insert(phones.end(), prons[pick].begin(), prons[pick].end());
  }
  if (phones.empty() || phones.front() != spec.silence_phone)
    phones.insert(phones.begin(), spec.silence_phone);
  if (phones.back() != spec.silence_phone) phones.push_back(spec.silence_phone);

  for (const auto& p : phones) {
    auto it = spec.phone_signatures.find(p);
    if (it == spec.phone_signatures.end())
      throw DomainError("no synthesis signature for phone '" + p + "'");
    if (it->second.low_hz >= spec.sample_rate_hz / 2.0 || it->second.high_hz >= spec.sample_rate_hz / 2.0)
      throw DomainError("signature of phone '" + p + "' exceeds Nyquist");
  }

  const auto seg_len =
      static_cast<std::size_t>(std::llround(spec.phone_duration_ms * spec.sample_rate_hz / 1000.0));
  if (seg_len == 0) throw DomainError("phone duration shorter than one sample");
  const auto ramp_len = std::min(
      seg_len / 2, static_cast<std::size_t>(std::llround(spec.edge_ramp_ms * spec.sample_rate_hz / 1000.0)));

  SynthUtterance out;
  out.waveform.sample_rate_hz = spec.sample_rate_hz;
  out.waveform.samples.reserve(seg_len * phones.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const std::int64_t ticks_per_second = 10'000'000;

  for (const auto& p : phones) {
    const PhoneSignature& sig = spec.phone_signatures.at(p);
    const std::size_t begin = out.waveform.size();
    for (std::size_t k = 0; k < seg_len; ++k) {
      const double t = double(begin + k) / spec.sample_rate_hz;
      const std::size_t edge = std::min(k, seg_len - 1 - k);
      const double gain = edge < ramp_len ? 0.5 - 0.5 * std::cos(std::numbers::pi * (edge + 0.5) / ramp_len) : 1.0;
      double v = spec.tone_amplitude * gain *
                 (std::sin(two_pi * sig.low_hz * t) + std::sin(two_pi * sig.high_hz * t));
      if (spec.noise_amplitude > 0.0) v += spec.noise_amplitude * noise(rng);
      out.waveform.samples.push_back(clamp_to_pcm(v));
    }
    const std::size_t end = out.waveform.size();
    out.labels.push_back({static_cast<std::int64_t>(begin) * ticks_per_second / spec.sample_rate_hz,
                          static_cast<std::int64_t>(end) * ticks_per_second / spec.sample_rate_hz, p});
  }
  return out;
}

}  // namespace svasr
