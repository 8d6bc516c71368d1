#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svasr/labels.hpp"

namespace svasr {

class Lexicon;

/// 16-bit PCM audio.
struct Waveform {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = 16000;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Waveform&) const = default;
};

enum class WaveFormat { raw, htk_headered };
enum class ByteOrder { little, big };

struct LevelReading {
  double speech_plus_noise_db = 0.0;
  double noise_db = 0.0;
};

/// Half-open sample range [begin, end).
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const SampleRange&) const = default;
};

/// HTK sample period (100 ns units) for a sample rate; 625 at 16 kHz.
std::int32_t htk_sample_period(int sample_rate_hz);

Waveform read_waveform(const std::filesystem::path& path, WaveFormat format,
                       ByteOrder order = ByteOrder::little, int raw_sample_rate_hz = 16000);
void write_waveform(const Waveform& w, const std::filesystem::path& path, WaveFormat format,
                    ByteOrder order = ByteOrder::little);

/// Multiplies every sample by c and rounds half away from zero. Requires 0 < c <= 1.
Waveform scale_volume(const Waveform& w, double c);

inline constexpr double kLevelFloorDb = -100.0;

/// 20*log10 of the RMS over the region, in LSB units; kLevelFloorDb for an all-zero region.
double measure_level(const Waveform& w, SampleRange region);
double measure_level(std::span<const std::int16_t> samples);

/// Level of each complete, non-overlapping frame of frame_ms milliseconds.
std::vector<double> frame_levels(const Waveform& w, double frame_ms = 10.0);

/// Level at rank floor(q * (n - 1)) of the sorted frame levels; kLevelFloorDb without frames.
double level_percentile(std::vector<double> levels, double q);

/// Meter reading over 10 ms frames: noise is the 10th percentile, speech plus noise the 90th.
LevelReading meter_levels(const Waveform& w);

/// Pair of tone frequencies (Hz) identifying a phone in synthetic speech.
struct PhoneSignature {
  double low_hz = 0.0;
  double high_hz = 0.0;
};

struct SynthSpec {
  std::vector<std::string> word_sequence;
  std::map<std::string, PhoneSignature> phone_signatures;
  double phone_duration_ms = 100.0;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
  int sample_rate_hz = 16000;
  double tone_amplitude = 4000.0;
  /// Raised-cosine fade at both ends of every phone segment; 0 keeps the tone amplitude fixed.
  double edge_ramp_ms = 20.0;
  /// Phone rendered before and after the utterance unless it already starts/ends with it.
  std::string silence_phone = "sil";
};

struct SynthUtterance {
  Waveform waveform;
  LabelSequence labels;
};

/// Concatenates one two-tone segment per phone, plus seeded Gaussian noise.
/// Words with several pronunciations pick one with the seeded generator.
SynthUtterance synthesize_utterance(const SynthSpec& spec, const Lexicon& lexicon);

/// Deterministic, pairwise-distinct signatures for the given phones, all below Nyquist.
std::map<std::string, PhoneSignature> assign_phone_signatures(
    const std::vector<std::string>& phones, int sample_rate_hz = 16000);

}  // namespace svasr
