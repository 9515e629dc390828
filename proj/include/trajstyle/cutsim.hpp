// ============================================================================
// cutsim.hpp - Mechanistic cutting simulator.
//
// Force model: per-tooth mechanistic milling forces, dF_t = K_c*h*b + K_e*b
// with chip thickness h = f_t*sin(phi) over the immersion arc
// phi in [pi - acos(1 - doc/R), pi] (conventional up-milling, single pass).
// TCP dynamics: 3-axis point mass with per-axis spring-damper tracking of a
// reference path, critically damped (K_d = 2*sqrt(m*K_p)).
// Axes: x transverse, y feed, z surface normal.
//
// Target-domain perturbations (sensor lag, force bias drift, reference
// backlash, tooth-count multiplier, material constant scaling) stand in for
// unmodeled real-world effects.
// ============================================================================

#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"
#include "trajstyle/trajdata.hpp"

namespace trajstyle::cutsim {

// ----------------------------------------------------------------------------
// Configuration types
// ----------------------------------------------------------------------------
struct CutterModel {
    double pitch_angle = 0.126;  // rad between teeth
    double helix_angle = 0.0;    // rad
    double radius = 0.025;       // m
    double width = 0.0005;       // m
    int n_teeth = 50;
    double spindle_rpm = 1000.0;

    void validate() const {
        if (radius <= 0.0 || width <= 0.0) throw DataError("cutter: radius and width must be > 0");
        const double closure = n_teeth * pitch_angle;
        if (std::fabs(closure - 2.0 * M_PI) > 0.02 * 2.0 * M_PI)
            throw DataError(strformat("cutter: n_teeth*pitch = %.4f not within 2%% of 2*pi",
                                      closure));
    }
};

struct MaterialParams {
    std::string name = "default";
    double k_c = 100.0;          // N/mm^2, cutting-mechanistic constant
    double k_e = 1.0;            // N/mm, edge-mechanistic constant
    double randomization = 0.3;  // relative half-range for per-episode draws

    void validate() const {
        if (k_c < 0.0 || k_e < 0.0) throw DataError("material: K_c, K_e must be >= 0");
    }
};

struct ActionBounds {
    double af_lo = -0.5, af_hi = 1.0;        // feed adjustment
    double doc_off_lo = -1.0, doc_off_hi = 1.0;  // mm
    double k_lo = 1e3, k_hi = 1e5;           // N/m
};

// [feed_adjust, doc_offset, k_x, k_y, k_z]
struct Action {
    double feed_adjust = 0.0;  // 0 nominal, 1 double
    double doc_offset = 0.0;   // mm relative to nominal DoC
    double k_x = 2e4, k_y = 2e4, k_z = 2e4;

    static constexpr int dim = 5;

    std::array<double, 5> to_array() const { return {feed_adjust, doc_offset, k_x, k_y, k_z}; }
    static Action from_array(const std::array<double, 5>& a) {
        return Action{a[0], a[1], a[2], a[3], a[4]};
    }
};

// maps between raw actions and [-1, 1] normalized coordinates
inline std::array<double, 5> action_to_norm(const Action& a, const ActionBounds& b) {
    auto n = [](double x, double lo, double hi) { return 2.0 * (x - lo) / (hi - lo) - 1.0; };
    return {n(a.feed_adjust, b.af_lo, b.af_hi), n(a.doc_offset, b.doc_off_lo, b.doc_off_hi),
            n(a.k_x, b.k_lo, b.k_hi), n(a.k_y, b.k_lo, b.k_hi), n(a.k_z, b.k_lo, b.k_hi)};
}

inline Action action_from_norm(const std::array<double, 5>& v, const ActionBounds& b) {
    auto r = [](double n, double lo, double hi) { return lo + (n + 1.0) * 0.5 * (hi - lo); };
    return Action{r(v[0], b.af_lo, b.af_hi), r(v[1], b.doc_off_lo, b.doc_off_hi),
                  r(v[2], b.k_lo, b.k_hi), r(v[3], b.k_lo, b.k_hi), r(v[4], b.k_lo, b.k_hi)};
}

struct Perturbations {
    double sensor_lag_tau = 0.0;    // s, first-order lag on sensed force
    double force_drift_rate = 0.0;  // N/s additive bias per axis
    double backlash = 0.0;          // m, reference transmission deadband width
    double tooth_multiplier = 1.0;  // 2.0 in the surrogate target domain
    double k_scale = 1.0;           // material constant scale, 1.3 in target

    bool any() const {
        return sensor_lag_tau != 0.0 || force_drift_rate != 0.0 || backlash != 0.0 ||
               tooth_multiplier != 1.0 || k_scale != 1.0;
    }
};

enum class Geometry { flat, offset, curved };

inline std::string geometry_name(Geometry g) {
    switch (g) {
        case Geometry::flat: return "flat";
        case Geometry::offset: return "offset";
        default: return "curved";
    }
}
inline Geometry geometry_from_name(const std::string& s) {
    if (s == "flat") return Geometry::flat;
    if (s == "offset") return Geometry::offset;
    if (s == "curved") return Geometry::curved;
    throw DataError("unknown geometry: " + s);
}

struct SimConfig {
    CutterModel cutter;
    MaterialParams material;
    ActionBounds bounds;
    double effective_mass = 5.0;   // kg, point-mass stand-in for arm inertia
    double nominal_feed = 0.75;    // m/min
    double nominal_doc = 1.0;      // mm
    double path_length = 0.2;      // m
    Geometry geometry = Geometry::flat;
    double surface_offset = 0.0;   // m, planned path inset into the true surface
    double curvature = 3.0;        // 1/m, curved geometry arc
    double control_dt = 0.002;     // s (500 Hz)
    double observation_dt = 0.02;  // s
    int policy_window = 100;       // observation window length fed to policies
    double radial_ratio = 0.3;     // k_r
    double contact_force_eps = 0.1;  // N, contact detection threshold for metrics
    Perturbations perturb;
    uint64_t seed = 0;

    static constexpr int n_state = 7;   // observation channels
    static constexpr int n_action = 5;

    void validate() const {
        cutter.validate();
        material.validate();
        if (!(control_dt > 0.0) || !(observation_dt > 0.0))
            throw DataError("sim: time steps must be positive");
        const double ratio = observation_dt / control_dt;
        if (std::fabs(ratio - std::round(ratio)) > 1e-9)
            throw DataError("sim: observation dt must be an integer multiple of control dt");
        if (path_length < 0.0) throw DataError("sim: negative path length");
        if (geometry == Geometry::curved && 1.0 / curvature <= path_length / 2.0)
            throw DataError("sim: curvature too large for path length");
    }

    // effective cutter after target-domain tooth multiplication; pitch is
    // recomputed so the closure invariant holds
    CutterModel effective_cutter() const {
        CutterModel c = cutter;
        if (perturb.tooth_multiplier != 1.0) {
            c.n_teeth = (int)std::lround(c.n_teeth * perturb.tooth_multiplier);
            c.pitch_angle = 2.0 * M_PI / c.n_teeth;
        }
        return c;
    }
};

// ----------------------------------------------------------------------------
// Cutting force. Returns force on the tool (F_x, F_y, F_z); x transverse
// (zero, the blade cuts in the y-z plane), y along feed (negative while
// cutting), z surface normal (positive, pushes the tool out of the cut).
// ----------------------------------------------------------------------------
inline std::array<double, 3> cutting_force(const CutterModel& cutter, double k_c, double k_e,
                                           double doc_mm, double feed_m_min,
                                           double spindle_angle, double radial_ratio = 0.3) {
    if (doc_mm < 0.0) throw DataError("cutting_force: negative depth of cut");
    if (doc_mm * 1e-3 > 2.0 * cutter.radius)
        throw DataError(strformat("cutting_force: doc %.3f mm buries the tool (2R = %.3f mm)",
                                  doc_mm, 2.0 * cutter.radius * 1e3));
    if (feed_m_min < 0.0) throw DataError("cutting_force: negative feed");
    std::array<double, 3> f{0.0, 0.0, 0.0};
    if (doc_mm == 0.0) return f;

    const double f_t = feed_m_min * 1e3 / (cutter.spindle_rpm * cutter.n_teeth);  // mm/tooth
    const double b = cutter.width * 1e3;                                          // mm
    const double phi_start = M_PI - std::acos(1.0 - doc_mm * 1e-3 / cutter.radius);
    const double two_pi = 2.0 * M_PI;

    for (int m = 0; m < cutter.n_teeth; ++m) {
        double phi = std::fmod(spindle_angle + m * cutter.pitch_angle, two_pi);
        if (phi < 0.0) phi += two_pi;
        if (phi < phi_start || phi > M_PI) continue;
        const double h = f_t * std::sin(phi);
        const double dft = k_c * h * b + k_e * b;
        const double dfr = radial_ratio * dft;
        f[1] += dft * std::cos(phi) + dfr * std::sin(phi);
        f[2] += dft * std::sin(phi) - dfr * std::cos(phi);
    }
    return f;
}

// ----------------------------------------------------------------------------
// Gravity compensation for a wrist force sensor:
//   F_w = R_we * F_ee + m*g*(z_hat - R_we * R_we0^T * z_hat)
// R_we is the current world<-end-effector rotation, R_we0 the one at the
// bias pose. Rotations are row-major 3x3.
// ----------------------------------------------------------------------------
using Rot3 = std::array<double, 9>;

inline void check_orthonormal(const Rot3& r, const char* which) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r[k * 3 + i] * r[k * 3 + j];
            const double expect = i == j ? 1.0 : 0.0;
            if (std::fabs(dot - expect) > 1e-9)
                throw DataError(strformat("%s: rotation matrix is not orthonormal", which));
        }
}

inline std::array<double, 3> gravity_compensate(const std::array<double, 3>& f_ee,
                                                const Rot3& r_we, const Rot3& r_we0, double mass,
                                                double g) {
    check_orthonormal(r_we, "gravity_compensate: R_we");
    check_orthonormal(r_we0, "gravity_compensate: R_we0");
    auto mul = [](const Rot3& r, const std::array<double, 3>& v) {
        std::array<double, 3> o{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) o[i] += r[i * 3 + j] * v[j];
        return o;
    };
    // R_we * R_we0^T
    Rot3 rel{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) rel[i * 3 + j] += r_we[i * 3 + k] * r_we0[j * 3 + k];
    const std::array<double, 3> zhat{0.0, 0.0, 1.0};
    auto rotated = mul(r_we, f_ee);
    auto relz = mul(rel, zhat);
    return {rotated[0] + mass * g * (zhat[0] - relz[0]),
            rotated[1] + mass * g * (zhat[1] - relz[1]),
            rotated[2] + mass * g * (zhat[2] - relz[2])};
}

// ----------------------------------------------------------------------------
// Episode runner
// ----------------------------------------------------------------------------
struct EpisodeMeta {
    double completion_time = 0.0;  // s
    bool fault = false;
    std::string material;
    std::string geometry;
    double mrv_mm3 = 0.0;       // integrated true removal
    double contact_fraction = 0.0;
    int clamp_events = 0;
    double k_c = 0.0, k_e = 0.0;  // per-episode randomized draws
    uint64_t seed = 0;
};

struct EpisodeResult {
    trajdata::Trajectory traj;
    EpisodeMeta meta;
};

// policy maps the most recent raw observation window (zero-padded before
// t = N) to an action
using Policy = std::function<Action(const Mat& window)>;

inline double surface_true(const SimConfig& cfg, double y) {
    if (cfg.geometry != Geometry::curved) return 0.0;
    const double r = 1.0 / cfg.curvature;
    const double half = cfg.path_length / 2.0;
    const double dy = y - half;
    return std::sqrt(r * r - dy * dy) - std::sqrt(r * r - half * half);
}

inline double surface_estimated(const SimConfig& cfg, double y) {
    const double inset = cfg.geometry == Geometry::offset ? std::max(cfg.surface_offset, 1e-3)
                                                          : cfg.surface_offset;
    return surface_true(cfg, y) - inset;
}

// One semi-implicit Euler step of a critically damped spring-damper axis:
//   m*a = kp*(ref - x) + kd*(vref - v) + f_ext,  kd = 2*sqrt(m*kp)
inline void impedance_axis_step(double kp, double mass, double dt, double ref, double vref,
                                double f_ext, double& x, double& v) {
    const double kd = 2.0 * std::sqrt(mass * kp);
    const double acc = (kp * (ref - x) + kd * (vref - v) + f_ext) / mass;
    v += acc * dt;
    x += v * dt;
}

namespace detail {

struct Backlash {
    double half = 0.0;
    double out = 0.0;
    double apply(double in) {
        if (half <= 0.0) return out = in;
        if (in - out > half) out = in - half;
        else if (out - in > half) out = in + half;
        return out;
    }
};

}  // namespace detail

inline EpisodeResult run_episode(const SimConfig& cfg, const Policy& policy, uint64_t seed) {
    cfg.validate();
    EpisodeResult res;
    res.meta.material = cfg.material.name;
    res.meta.geometry = geometry_name(cfg.geometry);
    res.meta.seed = seed;

    Rng rng(seed_mix(seed, 0xc0));
    const double r = cfg.material.randomization;
    const double k_c = cfg.material.k_c * (1.0 + rng.uniform(-r, r)) * cfg.perturb.k_scale;
    const double k_e = cfg.material.k_e * (1.0 + rng.uniform(-r, r)) * cfg.perturb.k_scale;
    res.meta.k_c = k_c;
    res.meta.k_e = k_e;

    const CutterModel cutter = cfg.effective_cutter();
    const int obs_every = (int)std::lround(cfg.observation_dt / cfg.control_dt);
    const int n_s = SimConfig::n_state;
    const int n_a = SimConfig::n_action;

    res.traj.id = strformat("ep_%016llx", (unsigned long long)seed);
    res.traj.dt = cfg.observation_dt;
    res.traj.domain = cfg.perturb.any() ? trajdata::Domain::target : trajdata::Domain::source;

    std::vector<double> states, actions;
    std::deque<std::array<double, 7>> history;

    if (cfg.path_length <= 0.0) {
        res.traj.states = Mat(0, n_s);
        res.traj.actions = Mat(0, n_a);
        return res;
    }

    // start at the estimated surface height, no engagement yet
    std::array<double, 3> pos{0.0, 0.0, surface_estimated(cfg, 0.0)};
    std::array<double, 3> vel{0.0, 0.0, 0.0};
    std::array<double, 3> f_lag{0.0, 0.0, 0.0};
    double bias = 0.0;
    double y_ref = 0.0;
    double z_ref_prev = pos[2];
    double spindle = 0.0;
    double t = 0.0;
    detail::Backlash bl_y{cfg.perturb.backlash / 2.0};
    detail::Backlash bl_z{cfg.perturb.backlash / 2.0};

    Action act{};  // until the first policy call: nominal feed, zero DoC command
    act.feed_adjust = 0.0;
    act.doc_offset = -cfg.nominal_doc;
    act.k_x = act.k_y = act.k_z = 0.5 * (cfg.bounds.k_lo + cfg.bounds.k_hi);

    const double spindle_rate = cutter.spindle_rpm * 2.0 * M_PI / 60.0;
    const double lag_coeff =
        cfg.perturb.sensor_lag_tau > 0.0 ? 1.0 - std::exp(-cfg.control_dt / cfg.perturb.sensor_lag_tau)
                                         : 1.0;
    const double t_max = 20.0 * cfg.path_length / (cfg.nominal_feed / 60.0) + 1.0;

    long contact_samples = 0, total_samples = 0;
    int step = 0;
    bool done = false;
    const int w_n = cfg.policy_window;

    auto clamp_action = [&](Action a) {
        auto clampv = [&](double v, double lo, double hi) {
            if (v < lo || v > hi) ++res.meta.clamp_events;
            return std::min(hi, std::max(lo, v));
        };
        a.feed_adjust = clampv(a.feed_adjust, cfg.bounds.af_lo, cfg.bounds.af_hi);
        a.doc_offset = clampv(a.doc_offset, cfg.bounds.doc_off_lo, cfg.bounds.doc_off_hi);
        if (cfg.nominal_doc + a.doc_offset < 0.0) {
            a.doc_offset = -cfg.nominal_doc;
            ++res.meta.clamp_events;
        }
        a.k_x = clampv(a.k_x, cfg.bounds.k_lo, cfg.bounds.k_hi);
        a.k_y = clampv(a.k_y, cfg.bounds.k_lo, cfg.bounds.k_hi);
        a.k_z = clampv(a.k_z, cfg.bounds.k_lo, cfg.bounds.k_hi);
        return a;
    };

    auto make_window = [&]() {
        Mat w(w_n, n_s);
        const int have = (int)history.size();
        for (int i = 0; i < w_n; ++i) {
            const int src = have - w_n + i;
            if (src < 0) continue;  // zero padding before t = N
            for (int j = 0; j < n_s; ++j) w.at(i, j) = history[src][j];
        }
        return w;
    };

    while (!done) {
        const bool obs_step = (step % obs_every) == 0;
        if (obs_step) {
            // sensed force with drift bias
            std::array<double, 7> obs{};
            obs[0] = f_lag[0] + bias;
            obs[1] = f_lag[1] + bias;
            obs[2] = f_lag[2] + bias;
            obs[3] = vel[1] * 60.0;                    // feed velocity, m/min
            obs[4] = (z_ref_prev - pos[2]) * 1e3;      // normal deviation, mm
            obs[5] = cfg.nominal_doc + act.doc_offset; // commanded DoC, mm
            obs[6] = std::min(1.0, std::max(0.0, y_ref / cfg.path_length));
            history.push_back(obs);
            if ((int)history.size() > w_n) history.pop_front();

            act = clamp_action(policy(make_window()));

            for (int j = 0; j < 7; ++j) states.push_back(obs[j]);
            auto av = act.to_array();
            for (int j = 0; j < 5; ++j) actions.push_back(av[j]);
            ++total_samples;
        }

        // reference advance at commanded feed
        double feed_cmd = cfg.nominal_feed * (1.0 + act.feed_adjust);
        feed_cmd = std::max(feed_cmd, 0.1 * cfg.nominal_feed);
        const double v_ref_y = feed_cmd / 60.0;
        y_ref += v_ref_y * cfg.control_dt;

        const double doc_cmd = std::max(0.0, cfg.nominal_doc + act.doc_offset);
        const double y_ref_c = std::min(y_ref, cfg.path_length);
        double z_ref = surface_estimated(cfg, y_ref_c) - doc_cmd * 1e-3;
        const double y_ref_eff = bl_y.apply(y_ref_c);
        z_ref = bl_z.apply(z_ref);
        const double v_ref_z = (z_ref - z_ref_prev) / cfg.control_dt;
        z_ref_prev = z_ref;

        // cutting force from true engagement at the tool position
        const double y_tool = std::min(std::max(pos[1], 0.0), cfg.path_length);
        const double doc_true =
            std::max(0.0, (surface_true(cfg, y_tool) - pos[2]) * 1e3);
        const double feed_act = std::max(0.0, vel[1]) * 60.0;
        std::array<double, 3> f_cut{0.0, 0.0, 0.0};
        if (doc_true > 0.0 && doc_true * 1e-3 <= 2.0 * cutter.radius) {
            f_cut = cutting_force(cutter, k_c, k_e, doc_true, feed_act, spindle,
                                  cfg.radial_ratio);
            ++contact_samples;
        } else if (doc_true * 1e-3 > 2.0 * cutter.radius) {
            res.meta.fault = true;
            done = true;
        }

        // semi-implicit Euler, per-axis spring-damper with critical damping
        const std::array<double, 3> kp{act.k_x, act.k_y, act.k_z};
        const std::array<double, 3> ref{0.0, y_ref_eff, z_ref};
        const std::array<double, 3> vref{0.0, v_ref_y, v_ref_z};
        for (int i = 0; i < 3; ++i)
            impedance_axis_step(kp[i], cfg.effective_mass, cfg.control_dt, ref[i], vref[i],
                                f_cut[i], pos[i], vel[i]);

        // sensor lag (exact first-order discretization) and bias drift
        for (int i = 0; i < 3; ++i) f_lag[i] += lag_coeff * (f_cut[i] - f_lag[i]);
        bias += cfg.perturb.force_drift_rate * cfg.control_dt;

        // true material removal
        res.meta.mrv_mm3 += doc_true * (cutter.width * 1e3) *
                            (std::max(0.0, vel[1]) * 1e3) * cfg.control_dt;

        spindle = std::fmod(spindle + spindle_rate * cfg.control_dt, 2.0 * M_PI);
        t += cfg.control_dt;
        ++step;

        // faults: numerical blow-up or out-of-bounds
        for (int i = 0; i < 3; ++i)
            if (!std::isfinite(pos[i]) || std::fabs(pos[i]) > cfg.path_length * 10.0 + 1.0) {
                res.meta.fault = true;
                done = true;
            }
        if (y_ref >= cfg.path_length) done = true;
        if (t > t_max) {
            res.meta.fault = true;
            done = true;
        }
    }

    res.meta.completion_time = t;
    res.meta.contact_fraction = step > 0 ? (double)contact_samples / step : 0.0;
    const int rows = (int)(states.size() / n_s);
    res.traj.states = Mat(rows, n_s);
    res.traj.states.v = std::move(states);
    res.traj.actions = Mat(rows, n_a);
    res.traj.actions.v = std::move(actions);
    return res;
}

// ----------------------------------------------------------------------------
// Scripted expert: force-regulating controller. Proportional feed reduction
// when the smoothed force magnitude exceeds the target, DoC ramp toward
// nominal engagement, stiffness scheduled up with sensed force. The commanded
// feed is monotone nonincreasing in the sensed force level, and below the
// target force the regulation term contributes exactly zero.
// ----------------------------------------------------------------------------
struct ExpertConfig {
    double target_force = 5.0;  // N
    double feed_base = -0.15;   // feed adjustment at or below target force
    double feed_gain = 0.5;     // reduction per unit relative overload
    double doc_rate = 0.25;     // mm/s ramp toward nominal DoC
    double k_frac_lo = 0.15;    // stiffness schedule span within bounds
    double k_frac_hi = 0.75;
    double k_sat_force = 12.0;  // N, force at which stiffness saturates
    double smooth_span = 8.0;   // samples, exponential smoothing span
};

inline double smoothed_force_mag(const Mat& window, double span = 8.0) {
    // exponentially weighted mean, most recent row dominates
    const double alpha = 2.0 / (span + 1.0);
    double s = 0.0;
    bool init = false;
    for (int r = 0; r < window.rows; ++r) {
        const double m = std::sqrt(window.at(r, 0) * window.at(r, 0) +
                                   window.at(r, 1) * window.at(r, 1) +
                                   window.at(r, 2) * window.at(r, 2));
        if (!init) {
            s = m;
            init = true;
        } else {
            s += alpha * (m - s);
        }
    }
    return s;
}

inline Action scripted_expert(const Mat& window, const SimConfig& cfg,
                              const ExpertConfig& ecfg) {
    const double fbar = smoothed_force_mag(window, ecfg.smooth_span);
    const double overload = std::max(0.0, fbar / ecfg.target_force - 1.0);

    Action a;
    a.feed_adjust = std::min(cfg.bounds.af_hi,
                             std::max(cfg.bounds.af_lo, ecfg.feed_base - ecfg.feed_gain * overload));

    const double doc_prev = std::max(0.0, window.at(window.rows - 1, 5));
    const double step = ecfg.doc_rate * cfg.observation_dt;
    const double doc_next =
        doc_prev + std::min(step, std::max(-step, cfg.nominal_doc - doc_prev));
    a.doc_offset = doc_next - cfg.nominal_doc;

    const double k_lo = cfg.bounds.k_lo + ecfg.k_frac_lo * (cfg.bounds.k_hi - cfg.bounds.k_lo);
    const double k_hi = cfg.bounds.k_lo + ecfg.k_frac_hi * (cfg.bounds.k_hi - cfg.bounds.k_lo);
    const double k = k_lo + (k_hi - k_lo) * std::min(1.0, fbar / ecfg.k_sat_force);
    a.k_x = a.k_y = a.k_z = k;
    return a;
}

// ----------------------------------------------------------------------------
// Off-policy exploration: bounded random walk in normalized action space.
// ----------------------------------------------------------------------------
inline Policy make_random_walk_policy(const SimConfig& cfg, uint64_t seed, double rate = 0.12) {
    auto rng = std::make_shared<Rng>(seed_mix(seed, 0x0ff));
    auto state = std::make_shared<std::array<double, 5>>();
    for (auto& v : *state) v = rng->uniform(-0.6, 0.6);
    ActionBounds bounds = cfg.bounds;
    return [rng, state, bounds, rate](const Mat&) {
        for (auto& v : *state) {
            v += rate * rng->normal();
            v = std::min(1.0, std::max(-1.0, v));
        }
        return action_from_norm(*state, bounds);
    };
}

inline Policy make_baseline_policy(const SimConfig& cfg) {
    const double k_mid = 0.5 * (cfg.bounds.k_lo + cfg.bounds.k_hi);
    return [k_mid](const Mat&) {
        Action a;
        a.feed_adjust = 0.0;
        a.doc_offset = 0.0;
        a.k_x = a.k_y = a.k_z = k_mid;
        return a;
    };
}

inline Policy make_expert_policy(const SimConfig& cfg, const ExpertConfig& ecfg) {
    return [cfg, ecfg](const Mat& w) { return scripted_expert(w, cfg, ecfg); };
}

}  // namespace trajstyle::cutsim
