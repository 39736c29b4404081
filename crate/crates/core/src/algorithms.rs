//! Agent update rules.
//!
//! * MidExtremes: move to the midpoint of a diameter-realizing pair of the
//!   received values.
//! * ApproachExtreme: move halfway towards the received value farthest from
//!   the agent's own value.
//!
//! Both can be run amortized over macro-rounds of `n - 1` rounds (for rooted
//! networks) and wrapped into approximate consensus by deciding after the
//! round bound for the given initial diameter and precision.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgorithmError {
    #[error("received no values (missing self-loop upstream)")]
    EmptyReceive,
    #[error("own value {0} is not among the received values")]
    SelfNotReceived(Point),
    #[error("macro-round phase {phase} outside 1..={len}")]
    PhaseOutOfRange { phase: usize, len: usize },
    #[error("round bound needs positive initial diameter and precision (got {delta}, {epsilon})")]
    NonPositive { delta: f64, epsilon: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    MidExtremes,
    ApproachExtreme,
}

impl UpdateRule {
    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::MidExtremes => "mid_extremes",
            UpdateRule::ApproachExtreme => "approach_extreme",
        }
    }

    /// Guaranteed round-by-round convergence rate in non-split models.
    pub fn rate_bound(self, d: usize) -> f64 {
        match (self, d) {
            (UpdateRule::MidExtremes, 1) => 0.5,
            (UpdateRule::MidExtremes, _) => (7.0f64 / 8.0).sqrt(),
            (UpdateRule::ApproachExtreme, 1) => 0.75,
            (UpdateRule::ApproachExtreme, _) => (31.0f64 / 32.0).sqrt(),
        }
    }

    /// Reciprocal of [`Self::rate_bound`], written as the exact ratio used
    /// for the round bound.
    fn contraction_base(self, d: usize) -> f64 {
        match (self, d) {
            (UpdateRule::MidExtremes, 1) => 2.0,
            (UpdateRule::MidExtremes, _) => (8.0f64 / 7.0).sqrt(),
            (UpdateRule::ApproachExtreme, 1) => 4.0 / 3.0,
            (UpdateRule::ApproachExtreme, _) => (32.0f64 / 31.0).sqrt(),
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmKind {
    pub rule: UpdateRule,
    #[serde(default)]
    pub amortized: bool,
    /// Round at which agents decide; `None` for pure asymptotic consensus.
    #[serde(default)]
    pub decide_after: Option<usize>,
}

impl AlgorithmKind {
    pub fn plain(rule: UpdateRule) -> Self {
        AlgorithmKind {
            rule,
            amortized: false,
            decide_after: None,
        }
    }

    pub fn amortized(rule: UpdateRule) -> Self {
        AlgorithmKind {
            rule,
            amortized: true,
            decide_after: None,
        }
    }

    pub fn deciding_after(self, rounds: usize) -> Self {
        AlgorithmKind {
            decide_after: Some(rounds.max(1)),
            ..self
        }
    }

    /// Rounds per macro-round for `n` agents (1 when not amortized).
    pub fn macro_len(&self, n: usize) -> usize {
        if self.amortized {
            n.saturating_sub(1).max(1)
        } else {
            1
        }
    }

    pub fn label(&self) -> String {
        if self.amortized {
            format!("amortized_{}", self.rule.name())
        } else {
            self.rule.name().to_string()
        }
    }
}

/// Per-agent state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub y: Point,
    decided: Option<Point>,
    /// Values flooded so far in the current macro-round.
    pub macro_buffer: Vec<Point>,
}

impl AgentState {
    pub fn new(id: usize, y: Point) -> Self {
        AgentState {
            id,
            y,
            decided: None,
            macro_buffer: Vec::new(),
        }
    }

    pub fn decided(&self) -> Option<&Point> {
        self.decided.as_ref()
    }

    /// Write-once decision; returns whether the slot was empty.
    pub fn decide(&mut self, value: Point) -> bool {
        if self.decided.is_some() {
            return false;
        }
        self.decided = Some(value);
        true
    }
}

pub fn mid_extremes_update(rcv: &[Point]) -> Result<Point, AlgorithmError> {
    if rcv.is_empty() {
        return Err(AlgorithmError::EmptyReceive);
    }
    let (a, b) = geometry::diameter(rcv)?.pair;
    Ok(geometry::midpoint(&rcv[a], &rcv[b])?)
}

pub fn approach_extreme_update(self_val: &Point, rcv: &[Point]) -> Result<Point, AlgorithmError> {
    if rcv.is_empty() {
        return Err(AlgorithmError::EmptyReceive);
    }
    if !rcv.iter().any(|p| p.bit_eq(self_val)) {
        return Err(AlgorithmError::SelfNotReceived(self_val.clone()));
    }
    let b = geometry::farthest_from(self_val, rcv)?;
    Ok(geometry::midpoint(self_val, &rcv[b])?)
}

pub fn apply_rule(rule: UpdateRule, self_val: &Point, rcv: &[Point]) -> Result<Point, AlgorithmError> {
    match rule {
        UpdateRule::MidExtremes => mid_extremes_update(rcv),
        UpdateRule::ApproachExtreme => approach_extreme_update(self_val, rcv),
    }
}

fn push_unique(buffer: &mut Vec<Point>, p: &Point) {
    if !buffer.iter().any(|q| q.bit_eq(p)) {
        buffer.push(p.clone());
    }
}

/// Payload an agent broadcasts at `phase`: its value at phase 1, the flooded
/// buffer afterwards.
pub fn macro_payload(state: &AgentState, phase: usize) -> Vec<Point> {
    if phase == 1 {
        vec![state.y.clone()]
    } else {
        state.macro_buffer.clone()
    }
}

/// One round of an amortized run.
///
/// `rcv_payloads` are the payloads broadcast this phase by the agent's
/// in-neighbors (itself included). At phase 1 the buffer restarts from the
/// agent's own value; at the last phase the update rule is applied to the
/// buffer with the value held since the macro-round started.
pub fn macro_round_step(
    mut state: AgentState,
    rcv_payloads: &[Vec<Point>],
    phase: usize,
    macro_len: usize,
    rule: UpdateRule,
) -> Result<(AgentState, Vec<Point>), AlgorithmError> {
    if phase == 0 || phase > macro_len {
        return Err(AlgorithmError::PhaseOutOfRange { phase, len: macro_len });
    }
    if phase == 1 {
        state.macro_buffer.clear();
        let own = state.y.clone();
        push_unique(&mut state.macro_buffer, &own);
    }
    for payload in rcv_payloads {
        for p in payload {
            push_unique(&mut state.macro_buffer, p);
        }
    }
    if phase == macro_len {
        state.y = apply_rule(rule, &state.y, &state.macro_buffer)?;
    }
    let payload = state.macro_buffer.clone();
    Ok((state, payload))
}

/// Sets the decision at `kind.decide_after`; no-op otherwise.
pub fn maybe_decide(mut state: AgentState, round: usize, kind: &AlgorithmKind) -> AgentState {
    if kind.decide_after == Some(round) {
        let y = state.y.clone();
        state.decide(y);
    }
    state
}

/// Smallest `k >= 0` with `base^k >= ratio`.
fn ceil_log(ratio: f64, base: f64) -> usize {
    if ratio <= 1.0 {
        return 0;
    }
    let mut k = (ratio.ln() / base.ln()).ceil().max(0.0) as usize;
    while k > 0 && base.powi(k as i32 - 1) >= ratio {
        k -= 1;
    }
    while base.powi(k as i32) < ratio {
        k += 1;
    }
    k
}

/// Rounds after which every execution in a non-split model (rooted model for
/// amortized runs on `n` agents) has diameter at most `epsilon`, given
/// initial diameter at most `delta`.
pub fn required_rounds(
    delta: f64,
    epsilon: f64,
    kind: &AlgorithmKind,
    d: usize,
    n: usize,
) -> Result<usize, AlgorithmError> {
    if !(delta > 0.0 && epsilon > 0.0) || !delta.is_finite() || !epsilon.is_finite() {
        return Err(AlgorithmError::NonPositive { delta, epsilon });
    }
    let macro_rounds = ceil_log(delta / epsilon, kind.rule.contraction_base(d));
    Ok(macro_rounds * kind.macro_len(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn mid_extremes_examples() {
        let v = p(&[3.0, -1.0]);
        assert_eq!(mid_extremes_update(std::slice::from_ref(&v)).unwrap(), v);
        assert_eq!(
            mid_extremes_update(&[p(&[0.0, 0.0]), p(&[3.0, 0.0]), p(&[0.0, 4.0])]).unwrap(),
            p(&[1.5, 2.0])
        );
        let equilateral = [p(&[0.0, 0.0]), p(&[2.0, 0.0]), p(&[1.0, 3f64.sqrt()])];
        assert_eq!(mid_extremes_update(&equilateral).unwrap(), p(&[1.0, 0.0]));
        assert_eq!(mid_extremes_update(&[]), Err(AlgorithmError::EmptyReceive));
    }

    #[test]
    fn approach_extreme_examples() {
        let v = p(&[2.0]);
        assert_eq!(approach_extreme_update(&v, std::slice::from_ref(&v)).unwrap(), v);
        assert_eq!(
            approach_extreme_update(&p(&[0.0]), &[p(&[0.0]), p(&[4.0]), p(&[-1.0])]).unwrap(),
            p(&[2.0])
        );
        assert_eq!(
            approach_extreme_update(&p(&[0.0, 0.0]), &[p(&[0.0, 0.0]), p(&[3.0, 0.0]), p(&[0.0, 4.0])])
                .unwrap(),
            p(&[0.0, 2.0])
        );
        assert_eq!(approach_extreme_update(&v, &[]), Err(AlgorithmError::EmptyReceive));
        assert!(matches!(
            approach_extreme_update(&v, &[p(&[1.0])]),
            Err(AlgorithmError::SelfNotReceived(_))
        ));
    }

    #[test]
    fn maybe_decide_is_write_once() {
        let kind = AlgorithmKind::plain(UpdateRule::MidExtremes).deciding_after(3);
        let s = AgentState::new(0, p(&[1.0]));
        let s = maybe_decide(s, 2, &kind);
        assert_eq!(s.decided(), None);
        let s = maybe_decide(s, 3, &kind);
        assert_eq!(s.decided(), Some(&p(&[1.0])));
        let mut s = s;
        s.y = p(&[5.0]);
        let s = maybe_decide(s, 4, &kind);
        assert_eq!(s.decided(), Some(&p(&[1.0])));
        let mut s = s;
        assert!(!s.decide(p(&[9.0])));
        assert_eq!(s.decided(), Some(&p(&[1.0])));
    }

    #[test]
    fn required_rounds_examples() {
        let me = AlgorithmKind::plain(UpdateRule::MidExtremes);
        let ae = AlgorithmKind::plain(UpdateRule::ApproachExtreme);
        assert_eq!(required_rounds(8.0, 1.0, &me, 1, 5).unwrap(), 3);
        assert_eq!(required_rounds(1.0, 1.0, &me, 2, 5).unwrap(), 0);
        assert_eq!(required_rounds(2.0, 1.0, &me, 2, 5).unwrap(), 11);
        assert_eq!(required_rounds(9.0, 1.0, &me, 1, 5).unwrap(), 4);
        // (4/3)^k >= 2 first at k = 3 (2.37); (32/31)^(k/2) >= 2 first at k = 44
        assert_eq!(required_rounds(2.0, 1.0, &ae, 1, 5).unwrap(), 3);
        assert_eq!(required_rounds(2.0, 1.0, &ae, 3, 5).unwrap(), 44);
        let amortized = AlgorithmKind::amortized(UpdateRule::MidExtremes);
        assert_eq!(required_rounds(8.0, 1.0, &amortized, 1, 5).unwrap(), 12);
        assert!(required_rounds(0.0, 1.0, &me, 1, 2).is_err());
        assert!(required_rounds(1.0, -1.0, &me, 1, 2).is_err());
    }

    #[test]
    fn required_rounds_matches_brute_force() {
        for rule in [UpdateRule::MidExtremes, UpdateRule::ApproachExtreme] {
            for d in [1, 2] {
                let beta = rule.rate_bound(d);
                for ratio in [1.5, 2.0, 3.0, 10.0, 1000.0, 1e6] {
                    // smallest k with beta^k * ratio <= 1 by repeated multiplication
                    let mut k = 0;
                    let mut r: f64 = ratio;
                    while r > 1.0 + 1e-12 {
                        r *= beta;
                        k += 1;
                    }
                    let got = required_rounds(ratio, 1.0, &AlgorithmKind::plain(rule), d, 2).unwrap();
                    assert_eq!(got, k, "{rule} d={d} ratio={ratio}");
                }
            }
        }
    }

    fn state(id: usize, y: f64) -> AgentState {
        AgentState::new(id, p(&[y]))
    }

    /// Drives a full macro-round by hand; `graphs[phase]` lists, per agent,
    /// its in-neighbors.
    fn macro_round(states: Vec<AgentState>, graphs: &[Vec<Vec<usize>>], rule: UpdateRule) -> Vec<AgentState> {
        let len = graphs.len();
        let mut states = states;
        for (k, in_nbrs) in graphs.iter().enumerate() {
            let phase = k + 1;
            let payloads: Vec<Vec<Point>> = states.iter().map(|s| macro_payload(s, phase)).collect();
            states = states
                .into_iter()
                .enumerate()
                .map(|(i, s)| {
                    let rcv: Vec<Vec<Point>> = in_nbrs[i].iter().map(|&j| payloads[j].clone()).collect();
                    macro_round_step(s, &rcv, phase, len, rule).unwrap().0
                })
                .collect();
        }
        states
    }

    #[test]
    fn macro_round_relays_along_chain() {
        // chain 0 -> 1 -> 2 in both phases
        let chain = vec![vec![0], vec![0, 1], vec![1, 2]];
        let states = vec![state(0, 0.0), state(1, 10.0), state(2, 4.0)];
        let after_one = {
            let payloads: Vec<Vec<Point>> = states.iter().map(|s| macro_payload(s, 1)).collect();
            let s2 = states[2].clone();
            let rcv: Vec<Vec<Point>> = chain[2].iter().map(|&j| payloads[j].clone()).collect();
            macro_round_step(s2, &rcv, 1, 2, UpdateRule::MidExtremes).unwrap().0
        };
        assert_eq!(after_one.macro_buffer, vec![p(&[4.0]), p(&[10.0])]);
        assert_eq!(after_one.y, p(&[4.0]));

        let out = macro_round(states, &[chain.clone(), chain], UpdateRule::MidExtremes);
        let mut buf: Vec<f64> = out[2].macro_buffer.iter().map(|q| q.coords()[0]).collect();
        buf.sort_by(f64::total_cmp);
        assert_eq!(buf, vec![0.0, 4.0, 10.0]);
        assert_eq!(out[2].y, p(&[5.0]));
        assert_eq!(out[0].y, p(&[0.0]));
        assert_eq!(out[1].y, p(&[5.0]));
    }

    #[test]
    fn macro_round_on_complete_graphs() {
        let all = vec![vec![0, 1, 2]; 3];
        let states = vec![state(0, 0.0), state(1, 2.0), state(2, 8.0)];
        let out = macro_round(states, &[all.clone(), all], UpdateRule::MidExtremes);
        for s in &out {
            assert_eq!(s.macro_buffer.len(), 3);
            assert_eq!(s.y, p(&[4.0]));
        }
    }

    #[test]
    fn single_phase_macro_round_is_plain_update() {
        let rcv = vec![vec![p(&[1.0])], vec![p(&[-3.0])], vec![p(&[0.5])]];
        for rule in [UpdateRule::MidExtremes, UpdateRule::ApproachExtreme] {
            let (s, _) = macro_round_step(AgentState::new(0, p(&[1.0])), &rcv, 1, 1, rule).unwrap();
            let flat: Vec<Point> = rcv.iter().flatten().cloned().collect();
            assert_eq!(s.y, apply_rule(rule, &p(&[1.0]), &flat).unwrap());
        }
    }

    #[test]
    fn macro_round_phase_checks() {
        let s = state(0, 1.0);
        assert_eq!(
            macro_round_step(s.clone(), &[], 0, 2, UpdateRule::MidExtremes).unwrap_err(),
            AlgorithmError::PhaseOutOfRange { phase: 0, len: 2 }
        );
        assert!(macro_round_step(s, &[], 3, 2, UpdateRule::MidExtremes).is_err());
    }

    fn values_1d() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..12)
    }

    proptest! {
        #[test]
        fn mid_extremes_1d_is_midpoint_rule(v in values_1d()) {
            let rcv: Vec<Point> = v.iter().map(|&x| p(&[x])).collect();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(mid_extremes_update(&rcv).unwrap(), p(&[(lo + hi) / 2.0]));
        }

        #[test]
        fn approach_extreme_1d_is_quarter_safe(v in values_1d(), k in any::<prop::sample::Index>()) {
            let rcv: Vec<Point> = v.iter().map(|&x| p(&[x])).collect();
            let own = rcv[k.index(rcv.len())].clone();
            let y = approach_extreme_update(&own, &rcv).unwrap().coords()[0];
            let m = v.iter().copied().fold(f64::INFINITY, f64::min);
            let big_m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * (1.0 + big_m.abs() + m.abs());
            prop_assert!(y >= 0.25 * big_m + 0.75 * m - slack);
            prop_assert!(y <= 0.75 * big_m + 0.25 * m + slack);
        }

        #[test]
        fn updates_stay_in_bounding_box(
            pts in (1usize..6).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, d), 1..9)),
            k in any::<prop::sample::Index>(),
        ) {
            let rcv: Vec<Point> = pts.into_iter().map(|c| Point::new(c).unwrap()).collect();
            let bbox = geometry::BoundingBox::of(&rcv).unwrap();
            let own = rcv[k.index(rcv.len())].clone();
            for rule in [UpdateRule::MidExtremes, UpdateRule::ApproachExtreme] {
                let y = apply_rule(rule, &own, &rcv).unwrap();
                prop_assert!(bbox.contains(&y, 0.0), "{rule}: {y} outside");
            }
        }
    }
}
