// Acceptance checks 1-9. One PASS/FAIL line each; exit status 1 if any fail.
// Usage: acceptance <configs-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "tsagrid/harness/run.hpp"

using namespace tsagrid;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail)
{
    std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!ok) {
        ++failures;
    }
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double location_error(LineModel model, FaultType type, double d, double dtheta)
{
    FaultScenario s = default_fault_scenario(model);
    s.d_true = d;
    s.fault_type = type;
    return sweep_tsa_fault(s, {dtheta}).front().estimate.error;
}

std::string read_file(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void criterion1()
{
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (LineModel model : {LineModel::short_line, LineModel::medium, LineModel::long_line}) {
        for (int k = 1; k <= 9; ++k) {
            worst = std::max(worst, location_error(model, FaultType::ABC, 0.1 * k, 0.0));
        }
    }
    const double dt = seconds_since(t0);
    report(1, worst < 1e-5 && dt < 5.0, fmt("max |D_e - D| = %.3g, runtime %.2f s", worst, dt));
}

void criterion2()
{
    bool ok = true;
    std::string detail;
    for (double d : {0.5, 0.75}) {
        double last = -1.0;
        for (double dth : {0.0, 5.0, 10.0, 20.0, 30.0}) {
            const double e = location_error(LineModel::long_line, FaultType::ABC, d, dth);
            ok = ok && e > last;
            last = e;
        }
        ok = ok && last >= 0.1 && last <= 0.3;
        detail += fmt("D=%.2f err(30)=%.4f; ", d, last);
    }
    report(2, ok, detail + "monotone over {0,5,10,20,30}");
}

void criterion3()
{
    bool ok = true;
    std::string detail;
    for (double d : {0.5, 0.75}) {
        const double e = location_error(LineModel::medium, FaultType::ABC, d, 30.0);
        ok = ok && e >= 0.15 && e <= 0.45;
        detail += fmt("D=%.2f err(30)=%.4f; ", d, e);
    }
    FaultScenario s = default_fault_scenario(LineModel::medium);
    const auto th = calibrate_thresholds(sweep_tsa_fault(s, {0.0}).front().trace, s.t_fault);
    const auto pre_fault_alarm = [&](double dth) {
        const auto pt = sweep_tsa_fault(s, {dth}).front();
        const auto a = first_alarms(pt.trace, th);
        return (a.first && *a.first < s.t_fault) || (a.second && *a.second < s.t_fault);
    };
    const bool quiet = !pre_fault_alarm(0.0);
    const bool alarm = pre_fault_alarm(25.0);
    ok = ok && quiet && alarm;
    detail += std::string("pre-fault alarm at 0: ") + (quiet ? "no" : "yes") + ", at 25: " + (alarm ? "yes" : "no");
    report(3, ok, detail);
}

double window_median(const IndicatorTrace& tr, double t0, double t1)
{
    std::vector<double> w;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        if (tr.t[k] >= t0 && tr.t[k] < t1) {
            w.push_back(tr.first[k]);
        }
    }
    return detail::median(w);
}

void criterion4()
{
    const FaultScenario s = default_fault_scenario(LineModel::short_line);
    const auto pts = sweep_tsa_fault(s, {0.0, 5.0, 25.0});
    std::vector<double> gap;
    for (const auto& p : pts) {
        gap.push_back(window_median(p.trace, s.t_fault, s.t_end) -
                      window_median(p.trace, s.t_fault - 1.0, s.t_fault));
    }
    report(4, gap[0] > gap[1] && gap[1] > gap[2],
           fmt("gap(A) at 0/5/25 deg = %.4g / %.4g / %.4g", gap[0], gap[1], gap[2]));
}

void criterion5()
{
    bool ok = true;
    std::string detail;
    for (LineModel model : {LineModel::short_line, LineModel::medium, LineModel::long_line}) {
        const double abc = location_error(model, FaultType::ABC, 0.5, 20.0);
        const double ab = location_error(model, FaultType::AB, 0.5, 20.0);
        const double a = location_error(model, FaultType::A, 0.5, 20.0);
        if (model == LineModel::long_line) {
            ok = ok && a >= abc && ab >= abc;
        }
        detail += harness::to_string(model) + fmt(" A=%.4f AB=%.4f ABC=%.4f; ", a, ab, abc);
    }
    report(5, ok, detail + "(ordering checked on long)");
}

void criterion6()
{
    // Common rotation of every pair in a window.
    const VoltageScenario sc;
    const auto frames = run_voltage_scenario(sc, 1);
    std::vector<VoltageCurrent> pairs;
    for (const auto& f : frames) {
        pairs.push_back({f.vr.value(), f.is.value()});
    }
    const std::size_t w = 20;
    double worst_z = 0.0;
    int windows = 0;
    for (std::size_t k = 0; k + w <= pairs.size(); k += 37) {
        std::span<const VoltageCurrent> win(pairs.data() + k, w);
        ThevEstimate a;
        try {
            a = estimate_thevenin(win);
        } catch (const SingularSystem&) {
            continue;
        }
        for (double rot : {-25.0, 5.0, 30.0}) {
            const cplx r = rotor_deg(rot);
            std::vector<VoltageCurrent> moved;
            for (const auto& p : win) {
                moved.push_back({p.v * r, p.i * r});
            }
            const ThevEstimate b = estimate_thevenin(moved);
            const cplx z_l = win.back().v / win.back().i;
            const cplx z_l_rot = moved.back().v / moved.back().i;
            worst_z = std::max(worst_z, std::abs(margin_z(a.z_th, z_l).margin_z - margin_z(b.z_th, z_l_rot).margin_z));
        }
        ++windows;
    }

    // Metric trend and asymmetry, averaged over seeds.
    std::vector<double> m(5, 0.0);
    const std::vector<double> dth{5.0, 15.0, 25.0, 20.0, -20.0};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto pts = sweep_tsa_voltage(sc, dth, seed);
        for (std::size_t i = 0; i < dth.size(); ++i) {
            m[i] += pts[i].metric / 5.0;
        }
    }
    const auto neg = [&] {
        std::vector<double> out(3, 0.0);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto pts = sweep_tsa_voltage(sc, {-5.0, -15.0, -25.0}, seed);
            for (std::size_t i = 0; i < 3; ++i) {
                out[i] += pts[i].metric / 5.0;
            }
        }
        return out;
    }();

    // Noiseless recovery.
    const cplx e_th = std::polar(1.02, 0.2);
    const cplx z_th(0.02, 0.15);
    std::vector<VoltageCurrent> clean;
    for (int k = 0; k < 20; ++k) {
        const cplx i = std::polar(0.5 + 0.03 * k, -0.3 + 0.01 * (k % 7));
        clean.push_back({e_th - z_th * i, i});
    }
    const ThevEstimate est = estimate_thevenin(clean);
    const double rec = std::max(std::abs(est.e_th.value() - e_th) / std::abs(e_th),
                                std::abs(est.z_th - z_th) / std::abs(z_th));

    const bool ok = windows > 0 && worst_z < 1e-9 && m[0] < m[1] && m[1] < m[2] && neg[0] < neg[1] &&
                    neg[1] < neg[2] && m[3] > m[4] && rec < 1e-9;
    report(6, ok,
           fmt("MARGIN_Z drift %.2g; metric 5/15/25 = %.4f/%.4f/%.4f", worst_z, m[0], m[1], m[2]) +
               fmt("; -5/-15/-25 = %.4f/%.4f/%.4f", neg[0], neg[1], neg[2]) +
               fmt("; +20 %.4f vs -20 %.4f; Thevenin rel err %.2g", m[3], m[4], rec));
}

void criterion7(const fs::path& configs)
{
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-500.0, 500.0);
    double worst = 0.0;
    int checked = 0;
    while (checked < 100) {
        std::vector<MmrPosition> m;
        const int n = 4 + checked % 3;
        for (int i = 0; i < n; ++i) {
            m.push_back({"m" + std::to_string(i), u(rng), u(rng)});
        }
        const EventPoint e{0.5 * u(rng), 0.5 * u(rng), 0.5};
        const auto r = synthesize_arrivals(e, m, default_wave_speed, 0.0, 1);
        if (TdoaProblem(r, default_wave_speed).geometry_conditioning() < 0.05) {
            continue;
        }
        const auto s = locate_event(r, default_wave_speed);
        worst = std::max(worst, std::hypot(s.x_e - e.x, s.y_e - e.y));
        ++checked;
    }

    const auto c = harness::parse_config(read_file(configs / "event_attack.yaml"));
    const EventPoint truth = *c.event.event;
    const auto r = synthesize_arrivals(truth, c.event.mmrs, c.event.v_e, 0.0, c.seed);
    const auto attacked = apply_timestamp_attack(r, c.event.victim, 0.2);
    const auto s = locate_event(attacked, c.event.v_e);
    const auto g = oracle::grid_search(attacked, c.event.v_e, -200.0, 600.0, -200.0, 600.0);
    const double moved = std::hypot(s.x_e - truth.x, s.y_e - truth.y);
    const double gap = std::hypot(s.x_e - g.x, s.y_e - g.y);
    report(7, worst < 1e-6 && moved > 50.0 && gap <= g.cell,
           fmt("noiseless worst %.2g mi; 0.2 s attack moves %.2f mi; solver vs grid %.3f mi (cell %.3f)", worst,
               moved, gap, g.cell) +
               " victim " + c.event.victim);
}

void criterion8()
{
    const auto t0 = std::chrono::steady_clock::now();

    // Capture.
    const int trials = 50;
    int captured = 0;
    int total = 0;
    for (double ratio : {2.0, 4.0}) {
        for (int k = 0; k < trials; ++k) {
            gps::GpsScene auth;
            auth.noise_sigma = 2.0;
            auth.satellites = {{1, 1.0, 100.25, 1500.0, {1}}, {7, 1.0, 350.5, -2500.0, {1}},
                               {13, 1.0, 600.75, 3000.0, {1}}, {22, 1.0, 850.0, -500.0, {1}}};
            gps::GpsScene spoof = auth;
            for (auto& s : spoof.satellites) {
                s.power = ratio;
                s.code_phase = std::fmod(s.code_phase + 200.0, gps::code_length);
            }
            for (const auto& o : gps::run_spoof_scenario(auth, spoof, 4.0, 1000 + 2 * k)) {
                captured += o.captured ? 1 : 0;
                ++total;
            }
        }
    }

    // Noiseless acquisition.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> phase(0.0, gps::code_length);
    std::uniform_int_distribution<int> bin(-20, 20);
    std::uniform_int_distribution<int> prn(1, 32);
    double worst_phase = 0.0;
    for (int k = 0; k < 20; ++k) {
        gps::GpsScene sc;
        sc.satellites = {{prn(rng), 1.0, std::floor(phase(rng) * 4.0) / 4.0, 500.0 * bin(rng), {1}}};
        const auto res = gps::acquire(gps::synthesize_baseband(sc, 1), sc.satellites[0].prn,
                                      gps::default_doppler_bins());
        worst_phase =
            std::max(worst_phase, std::abs(gps::code_phase_difference(res.code_phase_est, sc.satellites[0].code_phase)));
    }

    // Exhaustive periodic cross-correlation over all PRN pairs and lags.
    std::vector<gps::CaCode> codes;
    for (int p = 1; p <= 32; ++p) {
        codes.push_back(gps::gen_ca_code(p));
    }
    int bound = 0;
    for (std::size_t a = 0; a < codes.size(); ++a) {
        for (std::size_t b = a + 1; b < codes.size(); ++b) {
            for (int lag = 0; lag < gps::code_length; ++lag) {
                int sum = 0;
                for (int i = 0; i < gps::code_length; ++i) {
                    sum += codes[a][static_cast<std::size_t>(i)] *
                           codes[b][static_cast<std::size_t>((i + lag) % gps::code_length)];
                }
                bound = std::max(bound, std::abs(sum));
            }
        }
    }
    const double dt = seconds_since(t0);
    report(8, captured == total && worst_phase <= 0.5 && bound == 65 && dt < 30.0,
           fmt("captured %.0f/%.0f at ratio 2 and 4; noiseless phase error %.3g chip; ", captured, total,
               worst_phase) +
               "max |cross-correlation| " + std::to_string(bound) + fmt("; runtime %.1f s", dt));
}

void criterion9(const fs::path& configs)
{
    const fs::path root = fs::temp_directory_path() / ("tsagrid_acceptance_" + std::to_string(::getpid()));
    int compared = 0;
    int differing = 0;
    for (const auto& entry : fs::directory_iterator(configs)) {
        if (entry.path().extension() != ".yaml") {
            continue;
        }
        const std::string text = read_file(entry.path());
        const auto c = harness::parse_config(text);
        const auto stem = entry.path().stem().string();
        const auto a = harness::run(c, {root / (stem + "_1"), 1, text});
        const auto b = harness::run(c, {root / (stem + "_2"), 0, text});
        for (std::size_t i = 0; i < a.files.size(); ++i) {
            ++compared;
            if (read_file(a.files[i]) != read_file(b.files[i])) {
                ++differing;
                std::printf("  differs: %s\n", a.files[i].string().c_str());
            }
        }
    }
    fs::remove_all(root);
    report(9, compared > 0 && differing == 0,
           fmt("%.0f CSV files compared across repeat runs, %.0f differ", compared, differing));
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path configs = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
    const auto guard = [](int id, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            report(id, false, std::string("exception: ") + e.what());
        }
    };
    guard(1, criterion1);
    guard(2, criterion2);
    guard(3, criterion3);
    guard(4, criterion4);
    guard(5, criterion5);
    guard(6, criterion6);
    guard(7, [&] { criterion7(configs); });
    guard(8, criterion8);
    guard(9, [&] { criterion9(configs); });
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
