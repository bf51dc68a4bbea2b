#ifndef TSAGRID_GPS_HPP
#define TSAGRID_GPS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <fftw3.h>

#include "tsagrid/error.hpp"
#include "tsagrid/phasor.hpp"

namespace tsagrid::gps {

inline constexpr int code_length = 1023;
inline constexpr double chip_rate = 1.023e6;
inline constexpr double default_sample_rate = 4.092e6;
inline constexpr double l1_frequency = 1575.42e6;
inline constexpr double nav_bit_period = 0.020;

using CaCode = std::array<int, code_length>;

/// C/A Gold code of a satellite as +1/-1 chips (logic 0 -> +1, logic 1 -> -1).
inline CaCode gen_ca_code(int prn)
{
    // G2 phase-selector taps per PRN 1..32 (1-based register stages).
    static constexpr std::array<std::array<int, 2>, 32> taps{{
        {2, 6}, {3, 7}, {4, 8}, {5, 9}, {1, 9}, {2, 10}, {1, 8}, {2, 9},
        {3, 10}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {7, 8}, {8, 9}, {9, 10},
        {1, 4}, {2, 5}, {3, 6}, {4, 7}, {5, 8}, {6, 9}, {1, 3}, {4, 6},
        {5, 7}, {6, 8}, {7, 9}, {8, 10}, {1, 6}, {2, 7}, {3, 8}, {4, 9},
    }};
    tsagrid::detail::require(prn >= 1 && prn <= 32, "PRN must lie in 1..32");

    std::array<int, 10> g1;
    std::array<int, 10> g2;
    g1.fill(1);
    g2.fill(1);
    const auto& sel = taps[static_cast<std::size_t>(prn - 1)];

    CaCode code{};
    for (int i = 0; i < code_length; ++i) {
        const int g2i = g2[static_cast<std::size_t>(sel[0] - 1)] ^ g2[static_cast<std::size_t>(sel[1] - 1)];
        const int bit = g1[9] ^ g2i;
        code[static_cast<std::size_t>(i)] = bit == 0 ? 1 : -1;

        const int f1 = g1[2] ^ g1[9];
        const int f2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
        std::rotate(g1.rbegin(), g1.rbegin() + 1, g1.rend());
        std::rotate(g2.rbegin(), g2.rbegin() + 1, g2.rend());
        g1[0] = f1;
        g2[0] = f2;
    }
    return code;
}

/// One transmitted signal. Channel gain and signal power are folded into `power`.
struct SatelliteSignal {
    int prn = 1;
    double power = 1.0;
    double code_phase = 0.0;
    double doppler = 0.0;
    std::vector<int> nav_bits{1};
};

/// Baseband scene: the L1 carrier is removed, only Doppler remains.
struct GpsScene {
    std::vector<SatelliteSignal> satellites;
    double carrier_freq_nominal = l1_frequency;
    double noise_sigma = 0.0;
    double sample_rate = default_sample_rate;
    double duration_ms = 1.0;

    void validate() const
    {
        tsagrid::detail::require(duration_ms >= 1.0, "scene duration must be at least 1 ms");
        tsagrid::detail::require(sample_rate > 0.0, "sample rate must be positive");
        tsagrid::detail::require(noise_sigma >= 0.0, "noise sigma must be non-negative");
        for (const auto& s : satellites) {
            tsagrid::detail::require(s.prn >= 1 && s.prn <= 32, "PRN must lie in 1..32");
            tsagrid::detail::require(s.code_phase >= 0.0 && s.code_phase < code_length,
                            "code phase must lie in [0, 1023)");
            tsagrid::detail::require(std::abs(s.doppler) <= 10.0e3, "Doppler must lie within +/-10 kHz");
            tsagrid::detail::require(s.power >= 0.0, "signal power must be non-negative");
            tsagrid::detail::require(!s.nav_bits.empty(), "navigation bit sequence must be non-empty");
            for (int b : s.nav_bits) {
                tsagrid::detail::require(b == 1 || b == -1, "navigation bits must be +1 or -1");
            }
        }
    }

    std::size_t sample_count() const
    {
        return static_cast<std::size_t>(std::llround(sample_rate * duration_ms * 1e-3));
    }
};

/// Sum of sqrt(2 P) code(t - phase) nav(t) exp(j 2 pi f_d t) over satellites,
/// plus circular Gaussian noise with per-component std noise_sigma.
inline std::vector<cplx> synthesize_baseband(const GpsScene& scene, std::uint64_t seed)
{
    scene.validate();
    const std::size_t n = scene.sample_count();
    std::vector<cplx> out(n);
    const double fs = scene.sample_rate;

    for (const auto& sat : scene.satellites) {
        const CaCode code = gen_ca_code(sat.prn);
        const double amp = std::sqrt(2.0 * sat.power);
        const auto nbits = static_cast<long long>(sat.nav_bits.size());
        for (std::size_t k = 0; k < n; ++k) {
            const double t = static_cast<double>(k) / fs;
            double chip =
                std::fmod(static_cast<double>(k) * chip_rate / fs - sat.code_phase, static_cast<double>(code_length));
            if (chip < 0.0) {
                chip += code_length;
            }
            const auto ci = static_cast<std::size_t>(chip) % code_length;
            const auto bit_index = static_cast<long long>(std::floor(t / nav_bit_period)) % nbits;
            const double chip_value = code[ci] * sat.nav_bits[static_cast<std::size_t>(bit_index)];
            if (sat.doppler == 0.0) {
                out[k] += amp * chip_value;
            } else {
                out[k] += amp * chip_value * std::polar(1.0, 2.0 * std::numbers::pi * sat.doppler * t);
            }
        }
    }

    if (scene.noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, scene.noise_sigma);
        for (auto& s : out) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            s += cplx(re, im);
        }
    }
    return out;
}

namespace detail {

/// Cached FFTW plans per length. Planning is serialized; execution through the
/// new-array interface is thread-safe.
class FftPlans {
public:
    static FftPlans& instance()
    {
        static FftPlans plans;
        return plans;
    }

    void forward(std::vector<cplx>& data) { execute(data, FFTW_FORWARD); }
    void inverse(std::vector<cplx>& data) { execute(data, FFTW_BACKWARD); }

    FftPlans(const FftPlans&) = delete;
    FftPlans& operator=(const FftPlans&) = delete;

private:
    FftPlans() = default;
    ~FftPlans()
    {
        for (auto& [key, plan] : plans_) {
            fftw_destroy_plan(plan);
        }
    }

    void execute(std::vector<cplx>& data, int sign)
    {
        auto* buf = reinterpret_cast<fftw_complex*>(data.data());
        fftw_execute_dft(plan_for(data.size(), sign), buf, buf);
    }

    fftw_plan plan_for(std::size_t n, int sign)
    {
        std::lock_guard lock(mutex_);
        const auto key = std::make_pair(n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) {
            return it->second;
        }
        std::vector<cplx> scratch(n);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

} // namespace detail

inline std::vector<double> default_doppler_bins()
{
    std::vector<double> bins;
    for (int f = -10000; f <= 10000; f += 500) {
        bins.push_back(f);
    }
    return bins;
}

/// Correlation magnitude over the code-phase x Doppler search space.
/// `magnitude[b][k]` is the value at Doppler bin b and code lag k samples.
struct AcquisitionGrid {
    std::vector<double> doppler_bins;
    double samples_per_chip = 4.0;
    std::vector<std::vector<double>> magnitude;

    std::size_t lags() const { return magnitude.empty() ? 0 : magnitude.front().size(); }
    double code_phase_of_lag(std::size_t lag) const { return static_cast<double>(lag) / samples_per_chip; }
};

struct AcquisitionResult {
    double code_phase_est = 0.0;
    double doppler_est = 0.0;
    double peak = 0.0;
    double peak_to_floor = 1.0;
    std::size_t lag = 0;
    std::size_t bin = 0;
};

/// Circular correlation of one code period (1 ms coherent integration) against
/// the local replica, for every integer-sample lag and every Doppler bin.
inline AcquisitionGrid acquisition_grid(const std::vector<cplx>& samples, int prn,
                                        const std::vector<double>& doppler_bins,
                                        double sample_rate = default_sample_rate)
{
    tsagrid::detail::require(!doppler_bins.empty(), "Doppler bin list must be non-empty");
    const auto n = static_cast<std::size_t>(std::llround(sample_rate * 1e-3));
    tsagrid::detail::require(samples.size() >= n, "samples must cover at least one code period");

    const CaCode code = gen_ca_code(prn);
    std::vector<cplx> replica(n);
    for (std::size_t k = 0; k < n; ++k) {
        replica[k] = code[static_cast<std::size_t>(static_cast<double>(k) * chip_rate / sample_rate) % code_length];
    }
    auto& fft = detail::FftPlans::instance();
    fft.forward(replica);

    AcquisitionGrid grid;
    grid.doppler_bins = doppler_bins;
    grid.samples_per_chip = sample_rate / chip_rate;
    grid.magnitude.reserve(doppler_bins.size());
    std::vector<cplx> work(n);
    for (double f : doppler_bins) {
        for (std::size_t k = 0; k < n; ++k) {
            const double t = static_cast<double>(k) / sample_rate;
            work[k] = f == 0.0 ? samples[k] : samples[k] * std::polar(1.0, -2.0 * std::numbers::pi * f * t);
        }
        fft.forward(work);
        for (std::size_t k = 0; k < n; ++k) {
            work[k] *= std::conj(replica[k]);
        }
        fft.inverse(work);
        std::vector<double> row(n);
        // Unnormalized inverse FFT carries a factor n.
        const double scale = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) {
            row[k] = std::abs(work[k]) * scale;
        }
        grid.magnitude.push_back(std::move(row));
    }
    return grid;
}

namespace detail {

inline std::size_t circular_distance(std::size_t a, std::size_t b, std::size_t n)
{
    const std::size_t d = a > b ? a - b : b - a;
    return std::min(d, n - d);
}

/// Mean of a Doppler row excluding lags within `exclude` samples of `center`.
inline double row_floor(const std::vector<double>& row, std::size_t center, std::size_t exclude)
{
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
        if (circular_distance(k, center, row.size()) > exclude) {
            sum += row[k];
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

} // namespace detail

/// Arg-max cell of the grid; ties go to the lowest code phase, then the lowest Doppler.
inline AcquisitionResult peak_of(const AcquisitionGrid& grid)
{
    AcquisitionResult r;
    bool first = true;
    for (std::size_t b = 0; b < grid.magnitude.size(); ++b) {
        const auto& row = grid.magnitude[b];
        for (std::size_t k = 0; k < row.size(); ++k) {
            const double v = row[k];
            bool better = first || v > r.peak;
            if (!better && v == r.peak) {
                better = k < r.lag || (k == r.lag && grid.doppler_bins[b] < r.doppler_est);
            }
            if (better) {
                r.peak = v;
                r.lag = k;
                r.bin = b;
                r.doppler_est = grid.doppler_bins[b];
                first = false;
            }
        }
    }
    r.code_phase_est = grid.code_phase_of_lag(r.lag);
    const auto exclude = static_cast<std::size_t>(std::ceil(2.0 * grid.samples_per_chip));
    const double floor = detail::row_floor(grid.magnitude[r.bin], r.lag, exclude);
    r.peak_to_floor = floor > 0.0 ? std::max(1.0, r.peak / floor) : 1.0;
    return r;
}

inline AcquisitionResult acquire(const std::vector<cplx>& samples, int prn, const std::vector<double>& doppler_bins,
                                 double sample_rate = default_sample_rate)
{
    return peak_of(acquisition_grid(samples, prn, doppler_bins, sample_rate));
}

/// Signed circular code-phase difference a - b in chips, in (-511.5, 511.5].
inline double code_phase_difference(double a, double b)
{
    double d = std::fmod(a - b, static_cast<double>(code_length));
    if (d > code_length / 2.0) {
        d -= code_length;
    } else if (d <= -code_length / 2.0) {
        d += code_length;
    }
    return d;
}

struct SpoofOutcome {
    int prn = 1;
    AcquisitionResult before;
    AcquisitionResult after;
    double authentic_phase = 0.0;
    double spoof_phase = 0.0;
    /// Best correlation within +/-2 chips of each candidate phase after the attack.
    double peak_authentic = 0.0;
    double peak_spoof = 0.0;
    bool captured = false;
    bool ambiguous = false;
};

namespace detail {

inline double best_near(const AcquisitionGrid& grid, double code_phase)
{
    const auto n = grid.lags();
    const auto center = static_cast<std::size_t>(std::llround(code_phase * grid.samples_per_chip)) % n;
    const auto half = static_cast<std::size_t>(std::ceil(2.0 * grid.samples_per_chip));
    double best = 0.0;
    for (const auto& row : grid.magnitude) {
        for (std::size_t k = 0; k < n; ++k) {
            if (circular_distance(k, center, n) <= half) {
                best = std::max(best, row[k]);
            }
        }
    }
    return best;
}

} // namespace detail

/// Two-step attack: acquisition on the authentic signal, then re-acquisition
/// after a jamming interval (noise raised to `jam_sigma`) with the spoofer on
/// air. One outcome per satellite of the authentic scene.
inline std::vector<SpoofOutcome> run_spoof_scenario(const GpsScene& authentic, const GpsScene& spoof,
                                                    double jam_sigma, std::uint64_t seed,
                                                    const std::vector<double>& doppler_bins = default_doppler_bins())
{
    authentic.validate();
    spoof.validate();
    tsagrid::detail::require(jam_sigma >= 0.0, "jam sigma must be non-negative");
    tsagrid::detail::require(spoof.satellites.size() == authentic.satellites.size(),
                             "spoofer must replicate the authentic PRN set");
    for (std::size_t i = 0; i < authentic.satellites.size(); ++i) {
        tsagrid::detail::require(spoof.satellites[i].prn == authentic.satellites[i].prn,
                                 "spoofer must replicate the authentic PRN set");
    }

    const std::vector<cplx> clean = synthesize_baseband(authentic, seed);
    GpsScene attacked = authentic;
    attacked.noise_sigma = jam_sigma;
    attacked.satellites.insert(attacked.satellites.end(), spoof.satellites.begin(), spoof.satellites.end());
    const std::vector<cplx> hostile = synthesize_baseband(attacked, seed + 1);

    std::vector<SpoofOutcome> out;
    for (std::size_t i = 0; i < authentic.satellites.size(); ++i) {
        SpoofOutcome o;
        o.prn = authentic.satellites[i].prn;
        o.authentic_phase = authentic.satellites[i].code_phase;
        o.spoof_phase = spoof.satellites[i].code_phase;
        o.before = acquire(clean, o.prn, doppler_bins, authentic.sample_rate);
        const AcquisitionGrid grid = acquisition_grid(hostile, o.prn, doppler_bins, authentic.sample_rate);
        o.after = peak_of(grid);
        o.captured = spoof.satellites[i].power > 0.0 &&
                     std::abs(code_phase_difference(o.after.code_phase_est, o.spoof_phase)) <= 0.5;
        o.peak_authentic = detail::best_near(grid, o.authentic_phase);
        o.peak_spoof = detail::best_near(grid, o.spoof_phase);
        // Per-component noise std recovered from the Rayleigh mean of the floor;
        // peaks closer than three standard deviations of their difference are a tie.
        const double floor = o.after.peak / o.after.peak_to_floor;
        const double sigma = floor / std::sqrt(std::numbers::pi / 2.0);
        o.ambiguous = spoof.satellites[i].power > 0.0 &&
                      std::abs(o.peak_spoof - o.peak_authentic) < 3.0 * std::sqrt(2.0) * sigma;
        out.push_back(o);
    }
    return out;
}

/// Receiver clock time, propagation time and the broadcast UTC correction.
struct TimingModel {
    double t_rcv = 0.0;
    double t_p = 0.0;
    double dt_utc = 0.0;
};

inline double utc_from_receiver(const TimingModel& t)
{
    tsagrid::detail::require(t.t_p >= 0.0, "propagation time must be non-negative");
    return t.t_rcv - t.t_p - t.dt_utc;
}

/// Timing error caused by capturing a code phase `chip_shift` chips away.
inline double spoof_phase_to_timing_error(double chip_shift)
{
    return chip_shift / chip_rate;
}

} // namespace tsagrid::gps

#endif // TSAGRID_GPS_HPP
