#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "rulkit/ingest.hpp"

namespace rulkit {

inline constexpr std::size_t kFeatureDim = 38;

// Per-record feature vector: [horizontal: 9 time, 2 frequency, 8 wavelet
// energies] then the same 19 for the vertical channel.
using FeatureVector38 = std::array<double, kFeatureDim>;

enum class Wavelet { haar, db4 };
enum class SgBoundary {
    polyfit,  // fit the edge window once, evaluate off-center (exact for polynomials)
    mirror,   // reflect the series around its endpoints
};

struct SmootherConfig {
    std::size_t window = 21;            // odd, >= 3
    std::size_t polynomial_order = 3;   // < window
    SgBoundary boundary = SgBoundary::polyfit;
};

struct FeatureConfig {
    std::size_t crop_len = 1024;  // leading samples used per channel
    double sample_rate = kSampleRateHz;
    Wavelet wavelet = Wavelet::db4;
};

// [RMS, variance, peak, peak-to-peak, skewness, kurtosis (non-excess),
//  crest factor, margin index, waveform index], population moments.
std::array<double, 9> time_features(const std::vector<double>& signal);

// [frequency center of gravity, RMS frequency] from the one-sided power
// spectrum. Length must be a power of two.
std::array<double, 2> freq_features(const std::vector<double>& signal, double sample_rate);

// Energies of the eight terminal nodes of a 3-level wavelet-packet
// decomposition (periodized), ordered by ascending frequency band.
std::array<double, 8> wavelet_packet_energies(const std::vector<double>& signal,
                                              Wavelet wavelet = Wavelet::db4);

FeatureVector38 feature_vector(const VibrationRecord& record, const FeatureConfig& cfg = {});

// Least-squares polynomial smoothing; output length equals input length.
std::vector<double> savitzky_golay(const std::vector<double>& series,
                                   const SmootherConfig& cfg = {});

// Headerless CSV, one record per row, kFeatureDim columns.
void write_feature_csv(const std::filesystem::path& path,
                       const std::vector<FeatureVector38>& rows);
std::vector<FeatureVector38> read_feature_csv(const std::filesystem::path& path);

}  // namespace rulkit
