//! Square-law behavioral equations for the built-in benchmarks.
//!
//! Widths enter in nm, capacitances in pF. Each benchmark has its own
//! [`ModelConstants`]; they are effective values tuned so the goal box of the
//! benchmark is largely attainable under all sixteen corners.
//!
//! | benchmark      | kp_n   | kp_p   | L (nm) | j0_n (A/um) | j0_p (A/um) | lambda (1/V) |
//! |----------------|--------|--------|--------|-------------|-------------|--------------|
//! | single_stage   | 3.4e-4 | 1.7e-4 | 200    | 2e-6        | 2e-6        | 1.85         |
//! | two_stage      | 3.1e-3 | 2.4e-2 | 1000   | 6.4e-5      | 6.4e-5      | 6.8          |
//! | folded_cascode | 1.2e-3 | 3e-3   | 200    | 6e-5        | 4e-5        | 2.8          |
//! | nmcf           | 2e-4   | 1e-4   | 1000   | 5e-5        | 1e-5        | 0.54         |
//!
//! Shared: cj = 1e-18 F/nm, cg = 2e-18 F/nm, headroom reference 0.75 V with
//! exponent 0.5, bias references draw 0.25 of their width-scaled current.
//!
//! The table documents the defaults; [`ModelConstants::for_benchmark`] is authoritative.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{CornerModifiers, SpecVector};
use crate::circuit::{BenchmarkId, CircuitGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Process transconductance of NMOS devices (A/V^2).
    pub kp_n: f64,
    /// Process transconductance of PMOS devices (A/V^2).
    pub kp_p: f64,
    /// Channel length (nm).
    pub length_nm: f64,
    /// Bias current per um of NMOS current-source width (A/um).
    pub j0_n: f64,
    /// Bias current per um of PMOS current-source width (A/um).
    pub j0_p: f64,
    /// Channel-length modulation (1/V), same for both types.
    pub lambda: f64,
    /// Junction capacitance per nm of width (F/nm).
    pub cj: f64,
    /// Gate capacitance per nm of width (F/nm).
    pub cg: f64,
    /// Overdrive reference of the headroom factor (V).
    pub headroom_ref: f64,
    /// Exponent of the headroom factor.
    pub headroom_exp: f64,
    /// Current drawn by a bias reference relative to its width.
    pub ref_ratio: f64,
}

impl ModelConstants {
    pub fn for_benchmark(id: BenchmarkId) -> Self {
        let base = Self {
            kp_n: 3.1e-3,
            kp_p: 2.4e-2,
            length_nm: 1000.0,
            j0_n: 6.4e-5,
            j0_p: 6.4e-5,
            lambda: 6.8,
            cj: 1e-18,
            cg: 2e-18,
            headroom_ref: 0.75,
            headroom_exp: 0.5,
            ref_ratio: 0.25,
        };
        match id {
            BenchmarkId::TwoStage => base,
            BenchmarkId::SingleStage => Self {
                kp_n: 3.4e-4,
                kp_p: 1.7e-4,
                length_nm: 200.0,
                j0_n: 2e-6,
                j0_p: 2e-6,
                lambda: 1.85,
                ..base
            },
            BenchmarkId::FoldedCascode => Self {
                kp_n: 1.2e-3,
                kp_p: 3e-3,
                length_nm: 200.0,
                j0_n: 6e-5,
                j0_p: 4e-5,
                lambda: 2.8,
                ..base
            },
            BenchmarkId::Nmcf => Self {
                kp_n: 2e-4,
                kp_p: 1e-4,
                length_nm: 1000.0,
                j0_n: 5e-5,
                j0_p: 1e-5,
                lambda: 0.54,
                ..base
            },
        }
    }

    /// Supply-headroom factor applied to the low-frequency gain.
    pub fn headroom(&self, m: &CornerModifiers) -> f64 {
        let overdrive = m.vdd - 0.5 * (m.vth_n() + m.vth_p());
        (overdrive / self.headroom_ref).max(0.0).powf(self.headroom_exp)
    }
}

/// `90 - sum(atan(gbw / p_k))` in degrees, floored at 0.
pub fn phase_margin_deg(gbw: f64, poles: &[f64]) -> f64 {
    let lag: f64 = poles.iter().map(|p| (gbw / p).atan().to_degrees()).sum();
    (90.0 - lag).max(0.0)
}

fn gain_db(a: f64) -> f64 {
    (20.0 * a.log10()).max(0.0)
}

/// Junction-capacitance scaling with finger count: more fingers share diffusions.
fn finger_factor(f: f64) -> f64 {
    0.5 * (1.0 + 1.0 / f)
}

/// Device handle: width slot and finger slot offsets in the parameter vector.
#[derive(Debug, Clone, Copy)]
struct Fet {
    w: usize,
    f: usize,
}

impl Fet {
    fn width_nm(self, x: &[f64]) -> f64 {
        x[self.w]
    }

    fn width_um(self, x: &[f64]) -> f64 {
        x[self.w] * 1e-3
    }

    /// Junction capacitance (F).
    fn cj(self, x: &[f64], k: &ModelConstants) -> f64 {
        k.cj * x[self.w] * finger_factor(x[self.f])
    }

    /// Gate capacitance (F).
    fn cg(self, x: &[f64], k: &ModelConstants) -> f64 {
        k.cg * x[self.w]
    }
}

fn gm(kp_eff: f64, w_nm: f64, l_nm: f64, current: f64) -> f64 {
    (2.0 * kp_eff * (w_nm / l_nm) * current).sqrt()
}

#[derive(Debug, Clone)]
enum Topology {
    SingleStage {
        mp1: Fet,
        mp2: Fet,
        mp3: Fet,
        mp4: Fet,
        mn1: Fet,
        mn2: Fet,
        mn3: Fet,
    },
    TwoStage {
        mp1: Fet,
        mp2: Fet,
        mn1: Fet,
        mn2: Fet,
        mn3: Fet,
        mn4: Fet,
        cc: usize,
    },
    FoldedCascode {
        mp1: Fet,
        mp2: Fet,
        mn1: Fet,
        mn2: Fet,
        mn3: Fet,
        c: usize,
    },
    Nmcf {
        mp1: Fet,
        mp2: Fet,
        mp3: Fet,
        mp4: Fet,
        mn1: Fet,
        mn2: Fet,
        mn3: Fet,
        mn4: Fet,
        c1: usize,
        c2: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    topology: Topology,
    constants: ModelConstants,
    /// Load capacitance (F).
    c_load: f64,
}

struct Resolver<'a> {
    graph: &'a CircuitGraph,
}

impl Resolver<'_> {
    fn slot(&self, node: &str, slot: &str) -> Result<usize> {
        self.graph.slot_index(node, slot).ok_or_else(|| Error::Evaluation {
            node: node.to_string(),
            reason: format!("model expects slot `{slot}` on device `{node}`"),
        })
    }

    fn fet(&self, node: &str) -> Result<Fet> {
        Ok(Fet {
            w: self.slot(node, "w")?,
            f: self.slot(node, "f")?,
        })
    }

    fn cap(&self, node: &str) -> Result<usize> {
        self.slot(node, "c")
    }

    fn load(&self) -> Result<f64> {
        self.graph.fixed_value("cl").map(|pf| pf * 1e-12).ok_or_else(|| Error::Evaluation {
            node: "cl".to_string(),
            reason: "model expects a fixed load device `cl`".to_string(),
        })
    }
}

impl Model {
    pub(crate) fn resolve(id: BenchmarkId, graph: &CircuitGraph, constants: ModelConstants) -> Result<Self> {
        let r = Resolver { graph };
        let topology = match id {
            BenchmarkId::SingleStage => Topology::SingleStage {
                mp1: r.fet("mp1")?,
                mp2: r.fet("mp2")?,
                mp3: r.fet("mp3")?,
                mp4: r.fet("mp4")?,
                mn1: r.fet("mn1")?,
                mn2: r.fet("mn2")?,
                mn3: r.fet("mn3")?,
            },
            BenchmarkId::TwoStage => Topology::TwoStage {
                mp1: r.fet("mp1")?,
                mp2: r.fet("mp2")?,
                mn1: r.fet("mn1")?,
                mn2: r.fet("mn2")?,
                mn3: r.fet("mn3")?,
                mn4: r.fet("mn4")?,
                cc: r.cap("c")?,
            },
            BenchmarkId::FoldedCascode => Topology::FoldedCascode {
                mp1: r.fet("mp1")?,
                mp2: r.fet("mp2")?,
                mn1: r.fet("mn1")?,
                mn2: r.fet("mn2")?,
                mn3: r.fet("mn3")?,
                c: r.cap("c")?,
            },
            BenchmarkId::Nmcf => Topology::Nmcf {
                mp1: r.fet("mp1")?,
                mp2: r.fet("mp2")?,
                mp3: r.fet("mp3")?,
                mp4: r.fet("mp4")?,
                mn1: r.fet("mn1")?,
                mn2: r.fet("mn2")?,
                mn3: r.fet("mn3")?,
                mn4: r.fet("mn4")?,
                c1: r.cap("c1")?,
                c2: r.cap("c2")?,
            },
        };
        Ok(Self {
            topology,
            constants,
            c_load: r.load()?,
        })
    }

    pub(crate) fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub(crate) fn evaluate(&self, x: &[f64], m: &CornerModifiers) -> Result<SpecVector> {
        let (spec, node) = match self.topology {
            Topology::SingleStage { .. } => (self.single_stage(x, m), "mn3"),
            Topology::TwoStage { .. } => (self.two_stage(x, m), "mn2"),
            Topology::FoldedCascode { .. } => (self.folded_cascode(x, m), "mp2"),
            Topology::Nmcf { .. } => (self.nmcf(x, m), "mp2"),
        };
        spec.check(node)
    }

    /// Telescopic cascode: one gain stage, output pole dominant.
    fn single_stage(&self, x: &[f64], m: &CornerModifiers) -> SpecVector {
        let Topology::SingleStage { mp1, mp2, mp3, mp4, mn1, mn2, mn3 } = self.topology else {
            unreachable!()
        };
        let k = &self.constants;
        let (kn, kp, l) = (k.kp_n * m.mobility_scale_n, k.kp_p * m.mobility_scale_p, k.length_nm);
        let tail = k.j0_n * mn3.width_um(x) * m.mobility_scale_n;
        let half = tail / 2.0;
        let ro = 1.0 / (k.lambda * half);

        let gm1 = gm(kn, mn1.width_nm(x), l, half);
        let gm_casn = gm(kn, mn2.width_nm(x), l, half);
        let gm_casp = gm(kp, mp4.width_nm(x), l, half);
        let r_down = gm_casn * ro * ro;
        let r_up = gm_casp * ro * ro;
        let r_out = r_down * r_up / (r_down + r_up);
        let a = gm1 * r_out * k.headroom(m);

        let c_out = self.c_load + mn2.cj(x, k) + mp4.cj(x, k);
        let gbw = gm1 / (2.0 * PI * c_out);
        let c_casn = mn2.cg(x, k) + mn1.cj(x, k) + mn2.cj(x, k);
        let p_casn = gm_casn / (2.0 * PI * c_casn);
        let gm_mir = gm(kp, mp1.width_nm(x), l, half);
        let c_mir = mp1.cg(x, k) + mp2.cg(x, k) + mp3.cj(x, k);
        // mirror path carries half the signal: its pole costs roughly half the phase
        let p_mir = 2.0 * gm_mir / (2.0 * PI * c_mir);

        SpecVector {
            gain_db: gain_db(a),
            bandwidth_hz: gbw / a.max(1.0),
            phase_margin_deg: phase_margin_deg(gbw, &[p_casn, p_mir]),
            current_a: tail,
            power_w: m.vdd * tail,
            gbw_hz: gbw,
        }
    }

    /// Miller two-stage: gm1/Cc sets GBW, second-stage and mirror poles set PM.
    fn two_stage(&self, x: &[f64], m: &CornerModifiers) -> SpecVector {
        let Topology::TwoStage { mp1, mp2, mn1, mn2, mn3, mn4, cc } = self.topology else {
            unreachable!()
        };
        let k = &self.constants;
        let (kn, kp, l) = (k.kp_n * m.mobility_scale_n, k.kp_p * m.mobility_scale_p, k.length_nm);
        let i1 = k.j0_n * mn2.width_um(x) * m.mobility_scale_n;
        let i2 = k.j0_n * mn3.width_um(x) * m.mobility_scale_n;
        let i_ref = k.j0_n * mn4.width_um(x) * m.mobility_scale_n * k.ref_ratio;

        let gm1 = gm(kn, mn1.width_nm(x), l, i1 / 2.0);
        let gm2 = gm(kp, mp2.width_nm(x), l, i2);
        // r_o2 || r_o4 and r_o6 || r_o7 with equal lambda
        let r1 = 1.0 / (2.0 * k.lambda * i1 / 2.0);
        let r2 = 1.0 / (2.0 * k.lambda * i2);
        let a = gm1 * r1 * gm2 * r2 * k.headroom(m);

        let c_c = x[cc] * 1e-12;
        let gbw = gm1 / (2.0 * PI * c_c);
        let c_out = self.c_load + mp2.cj(x, k) + mn3.cj(x, k);
        let p2 = gm2 / (2.0 * PI * c_out);
        let gm_mir = gm(kp, mp1.width_nm(x), l, i1 / 2.0);
        let c_mir = 2.0 * mp1.cg(x, k) + mp1.cj(x, k) + mn1.cj(x, k);
        let p3 = gm_mir / (2.0 * PI * c_mir);

        let current = i1 + i2 + i_ref;
        SpecVector {
            gain_db: gain_db(a),
            bandwidth_hz: gbw / a,
            phase_margin_deg: phase_margin_deg(gbw, &[p2, p3]),
            current_a: current,
            power_w: m.vdd * current,
            gbw_hz: gbw,
        }
    }

    /// Folded cascode with PMOS input; `c` loads the output together with `cl`.
    fn folded_cascode(&self, x: &[f64], m: &CornerModifiers) -> SpecVector {
        let Topology::FoldedCascode { mp1, mp2, mn1, mn2, mn3, c } = self.topology else {
            unreachable!()
        };
        let k = &self.constants;
        let (kn, kp, l) = (k.kp_n * m.mobility_scale_n, k.kp_p * m.mobility_scale_p, k.length_nm);
        let tail = k.j0_p * mp2.width_um(x) * m.mobility_scale_p;
        let i_casc = k.j0_n * mn1.width_um(x) * m.mobility_scale_n;
        let i_ref = k.j0_n * mn3.width_um(x) * m.mobility_scale_n * k.ref_ratio;
        let i_sink = i_casc + tail / 2.0;

        let gm1 = gm(kp, mp1.width_nm(x), l, tail / 2.0);
        let gm_cas = gm(kn, mn2.width_nm(x), l, i_casc);
        let ro_in = 1.0 / (k.lambda * tail / 2.0);
        let ro_sink = 1.0 / (k.lambda * i_sink);
        let ro_cas = 1.0 / (k.lambda * i_casc);
        let r_fold = ro_in * ro_sink / (ro_in + ro_sink);
        let r_down = gm_cas * ro_cas * r_fold;
        let r_up = 1.0 / (k.lambda * i_casc);
        let r_out = r_down * r_up / (r_down + r_up);
        let a = gm1 * r_out * k.headroom(m);

        let c_out = self.c_load + x[c] * 1e-12 + mn2.cj(x, k) + mp2.cj(x, k);
        let gbw = gm1 / (2.0 * PI * c_out);
        let c_fold = mp1.cj(x, k) + mn1.cj(x, k) + mn2.cg(x, k);
        let p_fold = gm_cas / (2.0 * PI * c_fold);

        let current = tail + 2.0 * i_casc + i_ref;
        SpecVector {
            gain_db: gain_db(a),
            bandwidth_hz: gbw / a.max(1.0),
            phase_margin_deg: phase_margin_deg(gbw, &[p_fold]),
            current_a: current,
            power_w: m.vdd * current,
            gbw_hz: gbw,
        }
    }

    /// Three-stage nested Miller with feedforward. The reported bandwidth is
    /// the unity-gain frequency of the compensated loop.
    fn nmcf(&self, x: &[f64], m: &CornerModifiers) -> SpecVector {
        let Topology::Nmcf { mp1, mp2, mp3, mp4, mn1, mn2, mn3, mn4, c1, c2 } = self.topology else {
            unreachable!()
        };
        let k = &self.constants;
        let (kn, kp, l) = (k.kp_n * m.mobility_scale_n, k.kp_p * m.mobility_scale_p, k.length_nm);
        let i1 = k.j0_p * mp2.width_um(x) * m.mobility_scale_p;
        let i2 = k.j0_p * mp3.width_um(x) * m.mobility_scale_p;
        let i3 = k.j0_n * mn3.width_um(x) * m.mobility_scale_n;

        let gm1 = gm(kp, mp1.width_nm(x), l, i1 / 2.0);
        let gm2 = gm(kn, mn2.width_nm(x), l, i2);
        let gm3 = gm(kp, mp4.width_nm(x), l, i3);
        let gmf = gm(kn, mn4.width_nm(x), l, i3 / 2.0);
        let r1 = 1.0 / (2.0 * k.lambda * i1 / 2.0);
        let r2 = 1.0 / (2.0 * k.lambda * i2);
        let r3 = 1.0 / (2.0 * k.lambda * i3);
        let a = gm1 * r1 * gm2 * r2 * gm3 * r3 * k.headroom(m);

        let gbw = gm1 / (2.0 * PI * x[c1] * 1e-12);
        let c_o2 = x[c2] * 1e-12 + mp3.cj(x, k) + mn2.cj(x, k) + mp4.cg(x, k);
        let p2 = gm2 / (2.0 * PI * c_o2);
        let c_out = self.c_load + mp4.cj(x, k) + mn3.cj(x, k) + mn4.cj(x, k);
        let p3 = (gm3 + gmf) / (2.0 * PI * c_out);
        // mirror load of the first stage
        let gm_mir = gm(kn, mn1.width_nm(x), l, i1 / 2.0);
        let p_mir = 2.0 * gm_mir / (2.0 * PI * (2.0 * mn1.cg(x, k) + mn1.cj(x, k) + mp1.cj(x, k)));

        let current = i1 + i2 + i3;
        SpecVector {
            gain_db: gain_db(a),
            bandwidth_hz: gbw,
            phase_margin_deg: phase_margin_deg(gbw, &[p2, p3, p_mir]),
            current_a: current,
            power_w: m.vdd * current,
            gbw_hz: gbw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_benchmark, PvtCorner};
    use crate::sim::{corner_modifiers, Simulator};

    #[test]
    fn phase_margin_at_gbw_pole_is_45() {
        assert!((phase_margin_deg(1e6, &[1e6]) - 45.0).abs() < 1e-12);
        assert_eq!(phase_margin_deg(1e6, &[]), 90.0);
    }

    #[test]
    fn gbw_of_one_pf_at_6283_us() {
        // GBW = gm1 / (2 pi Cc)
        let gbw = 6.283e-6 / (2.0 * PI * 1e-12);
        assert!((gbw / 1e6 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn missing_device_is_reported_with_its_name() {
        let mut b = build_benchmark("two_stage").unwrap();
        b.graph.nodes.retain(|n| n.name != "mn4");
        b.graph.edges.retain(|&(a, c)| a < 5 && c < 5);
        let err = Model::resolve(b.id, &b.graph, ModelConstants::for_benchmark(b.id)).unwrap_err();
        assert!(err.to_string().contains("mn4"), "{err}");
    }

    #[test]
    fn doubling_bias_widths_doubles_power() {
        let sim = Simulator::for_benchmark("two_stage").unwrap();
        let g = sim.graph();
        let mut x = g.lower_bounds();
        for name in ["mn2", "mn3", "mn4"] {
            x.0[g.slot_index(name, "w").unwrap()] = 10_000.0;
        }
        let p1 = sim.evaluate(&x, &PvtCorner::nominal()).unwrap().power_w;
        for name in ["mn2", "mn3", "mn4"] {
            x.0[g.slot_index(name, "w").unwrap()] = 20_000.0;
        }
        let p2 = sim.evaluate(&x, &PvtCorner::nominal()).unwrap().power_w;
        assert!((p2 / p1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn headroom_is_one_at_nominal_overdrive() {
        let k = ModelConstants::for_benchmark(BenchmarkId::TwoStage);
        let mut m = corner_modifiers(&PvtCorner::nominal());
        m.vth_shift_n = 0.0;
        m.vth_shift_p = 0.0;
        assert!((k.headroom(&m) - 1.0).abs() < 1e-12);
    }
}
