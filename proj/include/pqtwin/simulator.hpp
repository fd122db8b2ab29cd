#pragma once

// Fixed-step nodal transient solver for the grid model with switched loads, a
// phasor steady-state solver for linear AlwaysOn scenarios, and a power audit.
//
// Ground is the source neutral (P1/N). The P1 phase nodes are driven by the
// supply waveform. Sections, inductors and capacitors become companion models
// (conductance + history current) each step; switches and diodes are two-valued
// conductances whose states are resolved before a step is accepted.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "pqtwin/error.hpp"
#include "pqtwin/loads.hpp"
#include "pqtwin/netmodel.hpp"
#include "pqtwin/signalgen.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

enum class IntegrationMethod { Trapezoidal, BackwardEuler };

struct SimConfig {
  double dt = 1e-4;
  IntegrationMethod method = IntegrationMethod::Trapezoidal;
  double t_end = 1.0;
  double linear_tol = 1e-9;  // relative nodal residual accepted per step
  double switch_on_ohm = 1e-3;
  double switch_off_ohm = 10e6;
  int max_state_iterations = 50;
  std::optional<std::vector<Tap>> record_taps;  // nullopt: all taps; P1 is always kept
  bool record_sections = true;

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidSpec, "dt must be positive");
    require(t_end >= dt, ErrorCode::InvalidSpec, "t_end must be at least one step");
    require(linear_tol > 0.0, ErrorCode::InvalidSpec, "linear tolerance must be positive");
    require(switch_on_ohm > 0.0 && switch_off_ohm > switch_on_ohm, ErrorCode::InvalidSpec,
            "switch resistances must satisfy 0 < R_on < R_off");
    require(max_state_iterations >= 1, ErrorCode::InvalidSpec, "need at least one state iteration");
  }
};

struct SimResult {
  double dt = 0.0;
  std::vector<double> time;
  std::array<std::array<std::vector<double>, kConductors>, kTaps> node_v;     // vs ground
  std::array<std::array<std::vector<double>, kConductors>, kSections> section_i;  // from -> to
  std::array<std::array<std::vector<double>, kPhases>, kTaps> shunt_i;        // phase -> N
  std::vector<std::vector<double>> load_i;  // per attachment, phase terminal -> load
  std::vector<std::vector<double>> load_v;  // per attachment, phase-to-local-neutral

  std::size_t size() const { return time.size(); }
  bool has_tap(Tap t) const { return !node_v[index(t)][0].empty(); }
  bool has_sections() const { return !section_i[0][0].empty(); }

  std::vector<double> phase_to_neutral(Tap t, Phase p) const {
    require(has_tap(t), ErrorCode::Validation, "tap " + to_string(t) + " was not recorded");
    const auto& a = node_v[index(t)][index(p)];
    const auto& n = node_v[index(t)][index(Conductor::N)];
    std::vector<double> out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - n[k];
    return out;
  }
};

namespace detail {

enum class BranchKind { Resistor, RL, Capacitor, Switch, Diode };

struct Branch {
  BranchKind kind;
  int a, b;  // node ids; current is positive a -> b
  double R = 0.0, L = 0.0, C = 0.0, Vf = 0.0;
  int state = -1;  // index into the switch/diode state vector
  double i_prev = 0.0, v_prev = 0.0;
  double G = 0.0, J = 0.0;  // companion for the current step
};

// Source neutral is ground; the P1 phase nodes are fixed by the supply.
constexpr int tap_node(Tap t, Conductor c) { return static_cast<int>(index(t) * kConductors + index(c)); }
constexpr int kGround = tap_node(Tap::P1, Conductor::N);

class Netlist {
 public:
  std::vector<Branch> branches;
  int node_count = static_cast<int>(kTaps * kConductors);
  int state_count = 0;
  std::vector<bool> is_diode_state;
  std::array<std::array<int, kConductors>, kSections> section_branch{};
  std::array<std::array<int, kPhases>, kTaps> shunt_branch{};
  std::vector<int> attachment_switch;
  std::vector<int> attachment_node;  // internal node behind the switch

  int new_node() { return node_count++; }

  int add(Branch b) {
    branches.push_back(b);
    return static_cast<int>(branches.size()) - 1;
  }
  int add_state(bool diode) {
    is_diode_state.push_back(diode);
    return state_count++;
  }
  void resistor(int a, int b, double R) { add({BranchKind::Resistor, a, b, R}); }
  int rl(int a, int b, double R, double L) {
    if (L <= 0.0) {
      require(R > 0.0, ErrorCode::Configuration, "zero-impedance branch makes the system singular");
      return add({BranchKind::Resistor, a, b, R});
    }
    return add({BranchKind::RL, a, b, R, L});
  }
  int capacitor(int a, int b, double C) { return add({BranchKind::Capacitor, a, b, 0.0, 0.0, C}); }
  void diode(int anode, int cathode, double Vf) {
    Branch d{BranchKind::Diode, anode, cathode};
    d.Vf = Vf;
    d.state = add_state(true);
    add(d);
  }
};

inline Netlist build_netlist(const GridModel& model, const std::vector<LoadAttachment>& attachments) {
  Netlist net;
  for (auto& row : net.shunt_branch) row.fill(-1);
  for (SectionId s : kAllSections) {
    for (Conductor c : kAllConductors) {
      const auto& p = model.section(s)[c];
      net.section_branch[index(s)][index(c)] =
          net.rl(tap_node(section_from(s), c), tap_node(section_to(s), c), p.R_mOhm * 1e-3, p.L_uH * 1e-6);
    }
  }
  for (Tap t : kAllTaps) {
    const double C = model.shunt_nF[index(t)] * 1e-9;
    if (C <= 0.0 || t == Tap::P1) continue;
    for (Phase p : kAllPhases)
      net.shunt_branch[index(t)][index(p)] =
          net.capacitor(tap_node(t, conductor_of(p)), tap_node(t, Conductor::N), C);
  }
  for (const auto& att : attachments) {
    const int a = tap_node(att.tap, conductor_of(att.phase));
    const int n = tap_node(att.tap, Conductor::N);
    const int x = net.new_node();
    Branch sw{BranchKind::Switch, a, x};
    sw.state = net.add_state(false);
    net.attachment_switch.push_back(net.add(sw));
    net.attachment_node.push_back(x);
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, Resistive>) {
            net.resistor(x, n, e.R_ohm);
          } else if constexpr (std::is_same_v<T, Capacitive>) {
            net.capacitor(x, n, e.C_uF * 1e-6);
          } else if constexpr (std::is_same_v<T, Inductive>) {
            net.rl(x, n, e.R_series_ohm, e.L_H);
          } else if constexpr (std::is_same_v<T, SeriesRLC>) {
            if (e.C_uF <= 0.0) {
              net.rl(x, n, e.R_ohm, e.L_H);
            } else if (e.R_ohm <= 0.0 && e.L_H <= 0.0) {
              net.capacitor(x, n, e.C_uF * 1e-6);
            } else {
              const int y = net.new_node();
              net.rl(x, y, e.R_ohm, e.L_H);
              net.capacitor(y, n, e.C_uF * 1e-6);
            }
          } else if constexpr (std::is_same_v<T, ParallelRLC>) {
            if (e.R_ohm > 0.0) net.resistor(x, n, e.R_ohm);
            if (e.L_H > 0.0) net.rl(x, n, 0.0, e.L_H);
            if (e.C_uF > 0.0) net.capacitor(x, n, e.C_uF * 1e-6);
          } else {
            const int pos = net.new_node();
            const int neg = net.new_node();
            net.diode(x, pos, e.diode_drop_V);
            net.diode(n, pos, e.diode_drop_V);
            net.diode(neg, x, e.diode_drop_V);
            net.diode(neg, n, e.diode_drop_V);
            net.resistor(pos, neg, e.R_dc_ohm);
            if (e.C_dc_uF > 0.0) net.capacitor(pos, neg, e.C_dc_uF * 1e-6);
          }
        },
        att.element);
  }
  return net;
}

inline bool is_fixed(int node) {
  return node == kGround || node == tap_node(Tap::P1, Conductor::L1) ||
         node == tap_node(Tap::P1, Conductor::L2) || node == tap_node(Tap::P1, Conductor::L3);
}

class TransientEngine {
 public:
  TransientEngine(Netlist net, const SimConfig& cfg) : net_(std::move(net)), cfg_(cfg) {
    free_id_.assign(static_cast<std::size_t>(net_.node_count), -1);
    int k = 0;
    for (int node = 0; node < net_.node_count; ++node)
      if (!is_fixed(node)) free_id_[static_cast<std::size_t>(node)] = k++;
    n_free_ = k;
    v_.assign(static_cast<std::size_t>(net_.node_count), 0.0);
    states_.assign(static_cast<std::size_t>(net_.state_count), 0);
    rhs_ = Eigen::VectorXd::Zero(n_free_);
  }

  const Netlist& netlist() const { return net_; }
  double node_voltage(int node) const { return v_[static_cast<std::size_t>(node)]; }
  double branch_current(int b) const { return net_.branches[static_cast<std::size_t>(b)].i_prev; }

  void set_switch(int branch, bool on) {
    states_[static_cast<std::size_t>(net_.branches[static_cast<std::size_t>(branch)].state)] = on ? 1 : 0;
  }

  void set_supply(std::span<const double, kPhases> u) {
    for (Phase p : kAllPhases) v_[static_cast<std::size_t>(tap_node(Tap::P1, conductor_of(p)))] = u[index(p)];
    v_[static_cast<std::size_t>(kGround)] = 0.0;
  }

  /// Consistent t = 0 solution from zero inductor currents and capacitor voltages:
  /// a backward-Euler solve with a vanishing step, so inductors are nearly open and
  /// capacitors nearly shorted.
  void initialize(double t) {
    const double h0 = cfg_.dt * 1e-5;
    for (auto& b : net_.branches) {
      b.i_prev = 0.0;
      b.v_prev = 0.0;
    }
    solve_step(h0, IntegrationMethod::BackwardEuler, t, "init");
    for (auto& b : net_.branches) {
      b.v_prev = branch_voltage(b);
      b.i_prev = b.G * b.v_prev + b.J;
    }
  }

  void step(double t) {
    solve_step(cfg_.dt, cfg_.method, t, "step");
    for (auto& b : net_.branches) {
      b.v_prev = branch_voltage(b);
      b.i_prev = b.G * b.v_prev + b.J;
    }
  }

 private:
  double branch_voltage(const Branch& b) const {
    return v_[static_cast<std::size_t>(b.a)] - v_[static_cast<std::size_t>(b.b)];
  }

  void companions(double h, IntegrationMethod m) {
    const bool trap = m == IntegrationMethod::Trapezoidal;
    for (auto& b : net_.branches) {
      switch (b.kind) {
        case BranchKind::Resistor:
          b.G = 1.0 / b.R;
          b.J = 0.0;
          break;
        case BranchKind::RL:
          if (trap) {
            b.G = 1.0 / (b.R + 2.0 * b.L / h);
            b.J = b.G * (b.v_prev + (2.0 * b.L / h - b.R) * b.i_prev);
          } else {
            b.G = 1.0 / (b.R + b.L / h);
            b.J = b.G * (b.L / h) * b.i_prev;
          }
          break;
        case BranchKind::Capacitor:
          if (trap) {
            b.G = 2.0 * b.C / h;
            b.J = -(b.G * b.v_prev + b.i_prev);
          } else {
            b.G = b.C / h;
            b.J = -b.G * b.v_prev;
          }
          break;
        case BranchKind::Switch:
          b.G = states_[static_cast<std::size_t>(b.state)] ? 1.0 / cfg_.switch_on_ohm : 1.0 / cfg_.switch_off_ohm;
          b.J = 0.0;
          break;
        case BranchKind::Diode:
          if (states_[static_cast<std::size_t>(b.state)]) {
            b.G = 1.0 / cfg_.switch_on_ohm;
            b.J = -b.G * b.Vf;
          } else {
            b.G = 1.0 / cfg_.switch_off_ohm;
            b.J = 0.0;
          }
          break;
      }
    }
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd>& factor(double h, IntegrationMethod m) {
    std::string key(states_.begin(), states_.end());
    key.push_back(static_cast<char>(m));
    const bool cacheable = h == cfg_.dt && m == cfg_.method;
    if (cacheable) {
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_free_, n_free_);
    for (const auto& b : net_.branches) {
      const int fa = free_id_[static_cast<std::size_t>(b.a)];
      const int fb = free_id_[static_cast<std::size_t>(b.b)];
      if (fa >= 0) A(fa, fa) += b.G;
      if (fb >= 0) A(fb, fb) += b.G;
      if (fa >= 0 && fb >= 0) {
        A(fa, fb) -= b.G;
        A(fb, fa) -= b.G;
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    require(lu.rcond() > 1e-18, ErrorCode::Configuration,
            "singular nodal system (floating node or zero-impedance loop)");
    matrix_ = A;
    if (!cacheable) {
      scratch_ = std::move(lu);
      return scratch_;
    }
    matrices_[key] = A;
    return cache_.emplace(key, std::move(lu)).first->second;
  }

  void assemble_rhs() {
    rhs_.setZero();
    for (const auto& b : net_.branches) {
      const int fa = free_id_[static_cast<std::size_t>(b.a)];
      const int fb = free_id_[static_cast<std::size_t>(b.b)];
      if (fa >= 0) {
        rhs_(fa) -= b.J;
        if (fb < 0) rhs_(fa) += b.G * v_[static_cast<std::size_t>(b.b)];
      }
      if (fb >= 0) {
        rhs_(fb) += b.J;
        if (fa < 0) rhs_(fb) += b.G * v_[static_cast<std::size_t>(b.a)];
      }
    }
  }

  void solve_step(double h, IntegrationMethod m, double t, const char* what) {
    for (int iter = 0;; ++iter) {
      companions(h, m);
      const auto& lu = factor(h, m);
      assemble_rhs();
      x_ = lu.solve(rhs_);
      check_residual(h, m, t);
      for (int node = 0; node < net_.node_count; ++node) {
        const int f = free_id_[static_cast<std::size_t>(node)];
        if (f >= 0) v_[static_cast<std::size_t>(node)] = x_(f);
      }
      if (!update_diodes(iter)) return;
      if (iter + 1 >= cfg_.max_state_iterations) {
        std::ostringstream os;
        os << "diode state iteration did not converge at t=" << t << " s (" << what << ")";
        fail(ErrorCode::Convergence, os.str());
      }
    }
  }

  void check_residual(double h, IntegrationMethod m, double t) {
    const Eigen::MatrixXd& A = (h == cfg_.dt && m == cfg_.method)
                                   ? matrices_.at(std::string(states_.begin(), states_.end()) + static_cast<char>(m))
                                   : matrix_;
    const double scale = A.cwiseAbs().rowwise().sum().maxCoeff() * x_.cwiseAbs().maxCoeff() +
                         rhs_.cwiseAbs().maxCoeff();
    const double r = (A * x_ - rhs_).cwiseAbs().maxCoeff();
    if (scale > 0.0 && r > cfg_.linear_tol * scale) {
      std::ostringstream os;
      os << "nodal residual " << r / scale << " exceeds tolerance at t=" << t << " s";
      fail(ErrorCode::Configuration, os.str());
    }
  }

  // Flips inconsistent diodes; returns true when another solve is needed.
  bool update_diodes(int iter) {
    int worst = -1;
    double worst_violation = 0.0;
    std::vector<int> flips;
    for (const auto& b : net_.branches) {
      if (b.kind != BranchKind::Diode) continue;
      const double v = branch_voltage(b);
      const bool on = states_[static_cast<std::size_t>(b.state)] != 0;
      double violation = 0.0;
      if (on) {
        const double i = b.G * v + b.J;
        if (i < -1e-9) violation = -i * cfg_.switch_on_ohm;
      } else if (v > b.Vf + 1e-9) {
        violation = v - b.Vf;
      }
      if (violation > 0.0) {
        flips.push_back(b.state);
        if (violation > worst_violation) {
          worst_violation = violation;
          worst = b.state;
        }
      }
    }
    if (flips.empty()) return false;
    // Flip all violators first; fall back to one at a time if that starts cycling.
    if (iter < 10) {
      for (int s : flips) states_[static_cast<std::size_t>(s)] ^= 1;
    } else {
      states_[static_cast<std::size_t>(worst)] ^= 1;
    }
    return true;
  }

  Netlist net_;
  SimConfig cfg_;
  std::vector<int> free_id_;
  int n_free_ = 0;
  std::vector<double> v_;
  std::vector<char> states_;
  Eigen::VectorXd rhs_, x_;
  std::unordered_map<std::string, Eigen::PartialPivLU<Eigen::MatrixXd>> cache_;
  std::unordered_map<std::string, Eigen::MatrixXd> matrices_;
  Eigen::PartialPivLU<Eigen::MatrixXd> scratch_;
  Eigen::MatrixXd matrix_;
};

}  // namespace detail

/// Transient run of the grid with attached loads. The supply waveform needs three
/// channels (L1, L2, L3 vs source neutral) sampled at 1/dt covering [0, t_end].
inline SimResult run_transient(const GridModel& model, const Waveform& supply,
                               const std::vector<LoadAttachment>& attachments, const SimConfig& cfg) {
  cfg.validate();
  model.validate();
  for (const auto& a : attachments) a.validate();
  require(supply.channel_count() == kPhases, ErrorCode::Validation,
          "supply waveform needs three channels (L1, L2, L3)");
  supply.validate();
  require(std::abs(supply.rate * cfg.dt - 1.0) < 1e-9, ErrorCode::Validation,
          "supply sampling rate must equal 1/dt");
  const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
  const std::size_t n = steps + 1;
  require(supply.size() >= n, ErrorCode::Validation, "supply waveform is shorter than t_end");

  std::array<std::vector<double>, kPhases> crossings;
  for (Phase p : kAllPhases) crossings[index(p)] = zero_crossings(supply.channel(index(p)), supply.rate);

  detail::TransientEngine engine(detail::build_netlist(model, attachments), cfg);
  const auto& net = engine.netlist();

  SimResult r;
  r.dt = cfg.dt;
  r.time.reserve(n);
  std::array<bool, kTaps> rec_tap{};
  if (cfg.record_taps) {
    for (Tap t : *cfg.record_taps) rec_tap[index(t)] = true;
  } else {
    rec_tap.fill(true);
  }
  rec_tap[index(Tap::P1)] = true;
  for (Tap t : kAllTaps)
    if (rec_tap[index(t)])
      for (auto& col : r.node_v[index(t)]) col.reserve(n);
  if (cfg.record_sections)
    for (auto& row : r.section_i)
      for (auto& col : row) col.reserve(n);
  r.load_i.assign(attachments.size(), {});
  r.load_v.assign(attachments.size(), {});
  for (std::size_t k = 0; k < attachments.size(); ++k) {
    r.load_i[k].reserve(n);
    r.load_v[k].reserve(n);
  }

  auto update_switches = [&](double t) {
    const double t_eval = t + 0.5 * cfg.dt;  // transitions land on the nearest sample
    for (std::size_t k = 0; k < attachments.size(); ++k) {
      const auto& att = attachments[k];
      engine.set_switch(net.attachment_switch[k],
                        switch_state(att.schedule, t_eval, crossings[index(att.phase)]));
    }
  };

  auto record = [&](double t) {
    r.time.push_back(t);
    for (Tap tap : kAllTaps) {
      if (!rec_tap[index(tap)]) continue;
      for (Conductor c : kAllConductors)
        r.node_v[index(tap)][index(c)].push_back(engine.node_voltage(detail::tap_node(tap, c)));
    }
    if (cfg.record_sections)
      for (SectionId s : kAllSections)
        for (Conductor c : kAllConductors)
          r.section_i[index(s)][index(c)].push_back(engine.branch_current(net.section_branch[index(s)][index(c)]));
    for (Tap tap : kAllTaps)
      for (Phase p : kAllPhases) {
        const int b = net.shunt_branch[index(tap)][index(p)];
        if (b >= 0) r.shunt_i[index(tap)][index(p)].push_back(engine.branch_current(b));
      }
    for (std::size_t k = 0; k < attachments.size(); ++k) {
      const auto& att = attachments[k];
      r.load_i[k].push_back(engine.branch_current(net.attachment_switch[k]));
      r.load_v[k].push_back(engine.node_voltage(detail::tap_node(att.tap, conductor_of(att.phase))) -
                            engine.node_voltage(detail::tap_node(att.tap, Conductor::N)));
    }
  };

  std::array<double, kPhases> u{};
  auto load_supply = [&](std::size_t k) {
    for (std::size_t p = 0; p < kPhases; ++p) u[p] = supply.channels[p][k];
    engine.set_supply(std::span<const double, kPhases>(u));
  };

  load_supply(0);
  update_switches(0.0);
  engine.initialize(0.0);
  record(0.0);
  for (std::size_t k = 1; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    load_supply(k);
    update_switches(t);
    engine.step(t);
    record(t);
  }
  return r;
}

// ---- phasor steady state ------------------------------------------------------

struct PhasorResult {
  double f_hz = 0.0;
  std::array<std::array<Complex, kConductors>, kTaps> node_v{};  // rms phasors vs ground
  std::array<std::array<Complex, kConductors>, kSections> section_i{};
  std::vector<Complex> load_i;
  std::vector<Complex> load_v;

  Complex phase_to_neutral(Tap t, Phase p) const {
    return node_v[index(t)][index(p)] - node_v[index(t)][index(Conductor::N)];
  }
};

/// Exact single-frequency solution for linear, always-on loads. Each attachment is its
/// element impedance in series with the closed switch resistance. Section resistances
/// are the DC values, matching the transient model.
inline PhasorResult solve_phasor_steady_state(const GridModel& model,
                                              const std::vector<LoadAttachment>& attachments,
                                              double u_rms, double f_hz, double phase = 0.0,
                                              double switch_on_ohm = 1e-3) {
  model.validate();
  require(f_hz > 0.0, ErrorCode::InvalidSpec, "phasor solution needs f > 0");
  for (const auto& a : attachments) {
    a.validate();
    require(is_linear(a.element), ErrorCode::NonlinearElement,
            "phasor steady state needs linear loads only");
    require(std::holds_alternative<AlwaysOn>(a.schedule.mode), ErrorCode::Validation,
            "phasor steady state needs always-on schedules");
  }
  const double w = kTwoPi * f_hz;
  // Unknowns: P2..P7, four conductors each.
  constexpr int n = static_cast<int>((kTaps - 1) * kConductors);
  auto node = [](Tap t, Conductor c) -> int {
    return t == Tap::P1 ? -1 : static_cast<int>((index(t) - 1) * kConductors + index(c));
  };
  std::array<Complex, kConductors> source{};
  const std::array<double, kPhases> offsets{0.0, -kTwoPi / 3.0, kTwoPi / 3.0};
  for (Phase p : kAllPhases)
    source[index(p)] = std::polar(u_rms, phase + offsets[index(p)] - kPi / 2.0);

  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  Eigen::VectorXcd I = Eigen::VectorXcd::Zero(n);
  auto stamp = [&](Tap ta, Conductor ca, Tap tb, Conductor cb, Complex y) {
    const int a = node(ta, ca), b = node(tb, cb);
    const Complex va = a < 0 ? source[index(ca)] : Complex{};
    const Complex vb = b < 0 ? source[index(cb)] : Complex{};
    if (a >= 0) {
      Y(a, a) += y;
      if (b >= 0) Y(a, b) -= y; else I(a) += y * vb;
    }
    if (b >= 0) {
      Y(b, b) += y;
      if (a >= 0) Y(b, a) -= y; else I(b) += y * va;
    }
  };
  std::array<std::array<Complex, kConductors>, kSections> z_sec{};
  for (SectionId s : kAllSections)
    for (Conductor c : kAllConductors) {
      const auto& p = model.section(s)[c];
      const Complex z{p.R_mOhm * 1e-3, w * p.L_uH * 1e-6};
      require(std::abs(z) > 0.0, ErrorCode::Configuration, "zero-impedance section");
      z_sec[index(s)][index(c)] = z;
      stamp(section_from(s), c, section_to(s), c, 1.0 / z);
    }
  for (Tap t : kAllTaps) {
    const double C = model.shunt_nF[index(t)] * 1e-9;
    if (C <= 0.0 || t == Tap::P1) continue;
    for (Phase p : kAllPhases) stamp(t, conductor_of(p), t, Conductor::N, Complex{0.0, w * C});
  }
  std::vector<Complex> z_load;
  for (const auto& a : attachments) {
    const Complex z = element_impedance(a.element, f_hz) + switch_on_ohm;
    z_load.push_back(z);
    stamp(a.tap, conductor_of(a.phase), a.tap, Conductor::N, 1.0 / z);
  }
  const Eigen::VectorXcd v = Y.fullPivLu().solve(I);

  PhasorResult r;
  r.f_hz = f_hz;
  for (Tap t : kAllTaps)
    for (Conductor c : kAllConductors) {
      const int k = node(t, c);
      r.node_v[index(t)][index(c)] = k < 0 ? source[index(c)] : v(k);
    }
  for (SectionId s : kAllSections)
    for (Conductor c : kAllConductors)
      r.section_i[index(s)][index(c)] =
          (r.node_v[index(section_from(s))][index(c)] - r.node_v[index(section_to(s))][index(c)]) /
          z_sec[index(s)][index(c)];
  for (std::size_t k = 0; k < attachments.size(); ++k) {
    const Complex u = r.phase_to_neutral(attachments[k].tap, attachments[k].phase);
    r.load_v.push_back(u);
    r.load_i.push_back(u / z_load[k]);
  }
  return r;
}

// ---- conservation checks -----------------------------------------------------

struct AuditOptions {
  double f_c = 50.0;
  double skip_cycles = 5.0;  // settling discarded before the window
};

struct PowerAudit {
  double P_source = 0.0;
  double P_loads = 0.0;   // attachments (switch and diode losses included) plus shunt capacitors
  double P_losses = 0.0;  // sum of i^2 R over all section conductors
  double mismatch = 0.0;  // |P_source - P_loads - P_losses| / |P_source|
  std::size_t window_start = 0;
  std::size_t window_length = 0;
};

/// Whole-cycle window after settling: [start, start + length).
inline std::pair<std::size_t, std::size_t> whole_cycle_window(std::size_t n, double rate, double f_c,
                                                              double skip_cycles) {
  require(f_c > 0.0 && rate > 0.0, ErrorCode::InvalidSpec, "window needs positive rate and f_c");
  const double spc = rate / f_c;
  const auto start = static_cast<std::size_t>(std::llround(skip_cycles * spc));
  require(n > start, ErrorCode::Validation, "trace shorter than the settling interval");
  const double cycles = std::floor(static_cast<double>(n - start) / spc + 1e-9);
  require(cycles >= 1.0, ErrorCode::Validation, "window shorter than one fundamental cycle");
  return {start, static_cast<std::size_t>(std::llround(cycles * spc))};
}

inline PowerAudit power_audit(const SimResult& r, const GridModel& model,
                              const std::vector<LoadAttachment>& attachments, const AuditOptions& opt = {}) {
  require(r.has_sections(), ErrorCode::Validation, "power audit needs recorded section currents");
  require(r.load_i.size() == attachments.size(), ErrorCode::Validation,
          "attachment list does not match the result");
  const auto [start, len] = whole_cycle_window(r.size(), 1.0 / r.dt, opt.f_c, opt.skip_cycles);
  auto mean_product = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = start; k < start + len; ++k) s += a[k] * b[k];
    return s / static_cast<double>(len);
  };
  PowerAudit out;
  out.window_start = start;
  out.window_length = len;
  for (Phase p : kAllPhases)
    out.P_source += mean_product(r.node_v[index(Tap::P1)][index(p)], r.section_i[index(SectionId::I)][index(p)]);
  for (std::size_t k = 0; k < attachments.size(); ++k) out.P_loads += mean_product(r.load_v[k], r.load_i[k]);
  for (Tap t : kAllTaps)
    for (Phase p : kAllPhases) {
      const auto& i = r.shunt_i[index(t)][index(p)];
      if (i.empty() || !r.has_tap(t)) continue;
      out.P_loads += mean_product(r.phase_to_neutral(t, p), i);
    }
  for (SectionId s : kAllSections)
    for (Conductor c : kAllConductors) {
      const auto& i = r.section_i[index(s)][index(c)];
      out.P_losses += model.section(s)[c].R_mOhm * 1e-3 * mean_product(i, i);
    }
  const double resid = out.P_source - out.P_loads - out.P_losses;
  out.mismatch = std::abs(out.P_source) > 1e-9 ? std::abs(resid / out.P_source) : std::abs(resid);
  return out;
}

/// Largest per-sample KCL residual at a tap for one conductor, relative to the sum of the
/// magnitudes of all currents meeting there. Samples where that sum is below floor_fraction
/// of the trace's peak inflow are skipped.
inline double max_kcl_residual(const SimResult& r, const std::vector<LoadAttachment>& attachments, Tap tap,
                               Conductor c, double floor_fraction = 1e-9) {
  require(r.has_sections(), ErrorCode::Validation, "KCL check needs recorded section currents");
  require(tap != Tap::P1, ErrorCode::Validation, "P1 is the supply node");
  std::vector<const std::vector<double>*> in, out;
  for (SectionId s : kAllSections) {
    if (section_to(s) == tap) in.push_back(&r.section_i[index(s)][index(c)]);
    if (section_from(s) == tap) out.push_back(&r.section_i[index(s)][index(c)]);
  }
  double peak = 0.0;
  for (double v : *in.front()) peak = std::max(peak, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    double net = 0.0, magnitude = 0.0;
    auto add = [&](double i, bool inward) {
      net += inward ? i : -i;
      magnitude += std::abs(i);
    };
    for (auto* x : in) add((*x)[k], true);
    for (auto* x : out) add((*x)[k], false);
    for (std::size_t a = 0; a < attachments.size(); ++a) {
      if (attachments[a].tap != tap) continue;
      if (c == Conductor::N)
        add(r.load_i[a][k], true);  // load current returns through the neutral node
      else if (conductor_of(attachments[a].phase) == c)
        add(r.load_i[a][k], false);
    }
    if (c != Conductor::N) {
      const auto& sh = r.shunt_i[index(tap)][index(c)];
      if (!sh.empty()) add(sh[k], false);
    } else {
      for (Phase p : kAllPhases) {
        const auto& sh = r.shunt_i[index(tap)][index(p)];
        if (!sh.empty()) add(sh[k], true);
      }
    }
    if (magnitude <= floor_fraction * peak || magnitude == 0.0) continue;
    worst = std::max(worst, std::abs(net) / magnitude);
  }
  return worst;
}

}  // namespace pqtwin
