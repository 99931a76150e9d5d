#include "rulkit/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "rulkit/errors.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

std::vector<BearingRun> make_corpus(const CorpusSpec& spec) {
    if (spec.bearings == 0 || spec.records_per_bearing < 2)
        throw ConfigError("make_corpus: need at least one bearing and two records");

    std::vector<BearingRun> corpus;
    corpus.reserve(spec.bearings);
    for (std::size_t b = 0; b < spec.bearings; ++b) {
        Rng rng = (derive_stream(spec.seed, 1000 * spec.condition + b));
        // Per-bearing character: slightly different tone and noise floor. The
        // jitter stays narrow so the degradation-to-indicator mapping is
        // shared across bearings and held-out evaluation stays meaningful.
        const double tone_freq = spec.tone_freq * rng.uniform(0.99, 1.01);
        const double noise_std = spec.noise_std * rng.uniform(0.97, 1.03);
        const double tone_amp = spec.tone_amp * rng.uniform(0.97, 1.03);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

        BearingRun run;
        run.name = "Bearing" + std::to_string(spec.condition) + "_" + std::to_string(b + 1);
        run.records.reserve(spec.records_per_bearing);
        const double denom = static_cast<double>(spec.records_per_bearing - 1);
        for (std::size_t r = 0; r < spec.records_per_bearing; ++r) {
            const double life = static_cast<double>(r) / denom;
            const double amp = 1.0 + spec.growth * life * life;
            VibrationRecord rec;
            rec.timestamp = 10.0 * static_cast<double>(r);
            rec.horizontal.resize(kSamplesPerRecord);
            rec.vertical.resize(kSamplesPerRecord);
            for (std::size_t i = 0; i < kSamplesPerRecord; ++i) {
                const double t = static_cast<double>(i) / spec.sample_rate;
                const double tone = tone_amp * std::sin(2.0 * std::numbers::pi * tone_freq * t +
                                                        phase);
                rec.horizontal[i] = amp * (noise_std * rng.normal() + tone);
                rec.vertical[i] = 0.8 * amp * (noise_std * rng.normal() + 0.6 * tone);
            }
            run.records.push_back(std::move(rec));
        }
        corpus.push_back(std::move(run));
    }
    return corpus;
}

void write_corpus(const std::filesystem::path& root, const std::vector<BearingRun>& corpus) {
    for (const auto& run : corpus) {
        const auto dir = root / run.name;
        std::filesystem::create_directories(dir);
        for (std::size_t r = 0; r < run.records.size(); ++r) {
            char name[32];
            std::snprintf(name, sizeof(name), "acc_%05zu.csv", r + 1);
            std::ofstream out(dir / name, std::ios::trunc);
            if (!out) throw IoError("cannot write record: " + (dir / name).string());
            serialize_record(out, run.records[r]);
        }
    }
}

}  // namespace rulkit
