#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "svasr/audio.hpp"

namespace svasr {

/// HTK parameter kind codes and qualifier bits.
namespace param_kind {
inline constexpr std::uint16_t waveform = 0;
inline constexpr std::uint16_t mfcc = 6;
inline constexpr std::uint16_t user = 9;
inline constexpr std::uint16_t energy = 0100;
inline constexpr std::uint16_t delta = 0400;
inline constexpr std::uint16_t accel = 01000;
inline constexpr std::uint16_t zeroth = 020000;
inline constexpr std::uint16_t mfcc_0_d_a = mfcc | delta | accel | zeroth;  // 8966
}  // namespace param_kind

struct MfccConfig {
  double pre_emphasis = 0.97;
  int window_samples = 400;
  int stride_samples = 160;
  int dft_size = 512;
  int n_filters = 26;
  int n_cepstra = 12;
  bool include_c0 = true;
  int delta_window = 2;
  double log_floor = 1e-10;

  /// Throws DomainError when the fields violate their constraints.
  void validate() const;
};

/// Column t holds the observation vector of frame t.
struct FeatureSequence {
  Eigen::MatrixXd frames;
  std::int32_t frame_period_100ns = 100000;
  std::uint16_t kind = param_kind::mfcc_0_d_a;

  Eigen::Index dim() const { return frames.rows(); }
  Eigen::Index size() const { return frames.cols(); }
  bool empty() const { return frames.cols() == 0; }
  auto frame(Eigen::Index t) const { return frames.col(t); }
};

/// Number of full windows: 0 below one window, else floor((len - window) / stride) + 1.
Eigen::Index frame_count(std::size_t n_samples, const MfccConfig& cfg);

/// Row i is the window starting at sample i * stride.
Eigen::MatrixXd frame_signal(const Eigen::VectorXd& samples, const MfccConfig& cfg);
Eigen::MatrixXd frame_signal(const Waveform& w, const MfccConfig& cfg);

/// out[n] = in[n] - k * in[n-1], with out[0] = (1 - k) * in[0].
Eigen::VectorXd pre_emphasize(const Eigen::VectorXd& frame, double k);

Eigen::VectorXd hamming_window(int length);

/// Triangular filters equally spaced on mel(f) = 2595 log10(1 + f/700), from 0 Hz to Nyquist.
/// Rows are filters, columns DFT bins 0..dft_size/2.
Eigen::MatrixXd mel_filterbank(const MfccConfig& cfg, int sample_rate_hz);

/// Rows k = 0..n_out-1 of sqrt(2/N) cos(pi k (j - 0.5) / N), j = 1..N.
Eigen::MatrixXd dct_matrix(int n_in, int n_out);

/// Static cepstra c1..cK followed by c0 (when include_c0). Amplitudes are used as reals.
FeatureSequence compute_static_mfcc(const Eigen::VectorXd& samples, const MfccConfig& cfg,
                                    int sample_rate_hz = 16000);
FeatureSequence compute_static_mfcc(const Waveform& w, const MfccConfig& cfg);

/// Appends regression deltas and then accelerations; edge frames are replicated.
FeatureSequence append_deltas(const FeatureSequence& seq, int delta_window);

/// MFCC_0_D_A: static cepstra plus deltas and accelerations.
FeatureSequence extract_features(const Waveform& w, const MfccConfig& cfg);

// ---------------------------------------------------------------------------

struct PcaModel {
  Eigen::VectorXd mean;
  /// D x k, columns ordered by decreasing eigenvalue.
  Eigen::MatrixXd basis;
  Eigen::VectorXd eigenvalues;

  Eigen::Index input_dim() const { return basis.rows(); }
  Eigen::Index output_dim() const { return basis.cols(); }
};

/// Top-k eigenvectors of the pooled frame covariance (divisor N - 1). Each basis
/// direction is signed so that its first nonzero entry is positive.
PcaModel fit_pca(std::span<const FeatureSequence> sequences, Eigen::Index k);

/// basis^T (x - mean) per frame; the result has the USER parameter kind.
FeatureSequence transform_pca(const PcaModel& model, const FeatureSequence& seq);
Eigen::MatrixXd reconstruct_pca(const PcaModel& model, const Eigen::MatrixXd& projected);

void write_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel read_pca(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// HTK parameter file: 12-byte big-endian header then big-endian float32 frames.
void write_param_file(const FeatureSequence& seq, const std::filesystem::path& path);
FeatureSequence read_param_file(const std::filesystem::path& path);

/// One frame per line, space-separated.
void write_feature_text(const FeatureSequence& seq, const std::filesystem::path& path);

}  // namespace svasr
