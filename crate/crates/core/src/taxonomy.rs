//! Trajectory categories: an 8-way behaviour taxonomy and k-means endpoint
//! anchors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, to_local, Point};
use crate::scene::{AgentType, Dataset};

pub const STATIONARY_DISPLACEMENT: f64 = 2.0;
pub const UTURN_ANGLE: f64 = 5.0 * PI / 6.0;
pub const TURN_ANGLE: f64 = PI / 6.0;
pub const LATERAL_OFFSET: f64 = 1.0;
pub const KMEANS_MAX_ITERS: usize = 100;
/// Steps shorter than this do not update the derived heading.
const MIN_STEP: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("trajectory contains non-finite values")]
    NonFinite,
    #[error("empty trajectory")]
    Empty,
    #[error("need at least {k} distinct points, got {distinct}")]
    TooFewPoints { k: usize, distinct: usize },
    #[error("no anchors fitted for {0}")]
    MissingAnchors(AgentType),
    #[error("unknown category scheme `{0}`")]
    UnknownScheme(String),
    #[error("anchor file: {0}")]
    Format(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BehaviorCategory {
    Stationary,
    Straight,
    StraightLeft,
    StraightRight,
    LeftTurn,
    RightTurn,
    LeftUTurn,
    RightUTurn,
}

impl BehaviorCategory {
    pub const ALL: [BehaviorCategory; 8] = [
        BehaviorCategory::Stationary,
        BehaviorCategory::Straight,
        BehaviorCategory::StraightLeft,
        BehaviorCategory::StraightRight,
        BehaviorCategory::LeftTurn,
        BehaviorCategory::RightTurn,
        BehaviorCategory::LeftUTurn,
        BehaviorCategory::RightUTurn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorCategory::Stationary => "stationary",
            BehaviorCategory::Straight => "straight",
            BehaviorCategory::StraightLeft => "straight-left",
            BehaviorCategory::StraightRight => "straight-right",
            BehaviorCategory::LeftTurn => "left-turn",
            BehaviorCategory::RightTurn => "right-turn",
            BehaviorCategory::LeftUTurn => "left-u-turn",
            BehaviorCategory::RightUTurn => "right-u-turn",
        }
    }

    pub fn is_uturn(self) -> bool {
        matches!(self, BehaviorCategory::LeftUTurn | BehaviorCategory::RightUTurn)
    }
}

impl fmt::Display for BehaviorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accumulated heading change along `points` (local frame, starting at the
/// origin with heading 0), from step displacement directions.
pub fn heading_change(points: &[Point]) -> f64 {
    let mut prev = [0.0, 0.0];
    let mut h = 0.0;
    let mut total = 0.0;
    for p in points {
        let (dx, dy) = (p[0] - prev[0], p[1] - prev[1]);
        if dx.hypot(dy) > MIN_STEP {
            let nh = dy.atan2(dx);
            total += normalize_angle(nh - h);
            h = nh;
            prev = *p;
        }
    }
    total
}

/// Categorises a future given in the agent's frame (present pose at the
/// origin, heading +x). `headings`, when given, are the per-step headings in
/// that frame; otherwise they are derived from displacements.
pub fn classify_trajectory(points: &[Point], headings: Option<&[f64]>) -> Result<BehaviorCategory, TaxonomyError> {
    let last = *points.last().ok_or(TaxonomyError::Empty)?;
    if points.iter().flatten().chain(headings.unwrap_or(&[])).any(|v| !v.is_finite()) {
        return Err(TaxonomyError::NonFinite);
    }
    if last[0].hypot(last[1]) < STATIONARY_DISPLACEMENT {
        return Ok(BehaviorCategory::Stationary);
    }
    let dh = match headings {
        Some(hs) => {
            let mut prev = 0.0;
            let mut total = 0.0;
            for &h in hs {
                total += normalize_angle(h - prev);
                prev = h;
            }
            total
        }
        None => heading_change(points),
    };
    let left = dh > 0.0;
    Ok(if dh.abs() >= UTURN_ANGLE {
        if left {
            BehaviorCategory::LeftUTurn
        } else {
            BehaviorCategory::RightUTurn
        }
    } else if dh.abs() >= TURN_ANGLE {
        if left {
            BehaviorCategory::LeftTurn
        } else {
            BehaviorCategory::RightTurn
        }
    } else if last[1] > LATERAL_OFFSET {
        BehaviorCategory::StraightLeft
    } else if last[1] < -LATERAL_OFFSET {
        BehaviorCategory::StraightRight
    } else {
        BehaviorCategory::Straight
    })
}

fn dist2(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// Nearest anchor to `endpoint`; ties go to the lowest index.
pub fn assign_anchor(endpoint: Point, anchors: &[Point]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, a) in anchors.iter().enumerate() {
        let d = dist2(endpoint, *a);
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Point>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn inertia_of(points: &[Point], centers: &[Point], assign: &[usize]) -> f64 {
    points.iter().zip(assign).map(|(p, &a)| dist2(*p, centers[a])).sum()
}

fn distinct_count(points: &[Point]) -> usize {
    let mut v: Vec<(u64, u64)> = points.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`KMEANS_MAX_ITERS`] is reached.
pub fn fit_anchors(points: &[Point], k: usize, seed: u64) -> Result<KMeansFit, TaxonomyError> {
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TaxonomyError::NonFinite);
    }
    let distinct = distinct_count(points);
    if k == 0 || distinct < k {
        return Err(TaxonomyError::TooFewPoints { k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if r < d {
                    break;
                }
                r -= d;
            }
        }
        let c = points[pick.expect("a point away from all centres exists")];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(*p, c));
        }
        centers.push(c);
    }
    let mut assign: Vec<usize> = points.iter().map(|p| assign_anchor(*p, &centers)).collect();
    let mut trace = vec![inertia_of(points, &centers, &assign)];
    let mut converged = false;
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sum = vec![[0.0, 0.0]; k];
        let mut count = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sum[a][0] += p[0];
            sum[a][1] += p[1];
            count[a] += 1;
        }
        for j in 0..k {
            if count[j] > 0 {
                centers[j] = [sum[j][0] / count[j] as f64, sum[j][1] / count[j] as f64];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| assign_anchor(*p, &centers)).collect();
        trace.push(inertia_of(points, &centers, &next));
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
    }
    Ok(KMeansFit {
        inertia: *trace.last().unwrap(),
        centers,
        trace,
        converged,
    })
}

/// Endpoint anchors per agent type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnchorSet {
    pub per_type: BTreeMap<AgentType, (Vec<Point>, f64)>,
}

impl AnchorSet {
    pub fn anchors(&self, ty: AgentType) -> Result<&[Point], TaxonomyError> {
        self.per_type.get(&ty).map(|(a, _)| a.as_slice()).ok_or(TaxonomyError::MissingAnchors(ty))
    }

    pub fn assign(&self, ty: AgentType, endpoint: Point) -> Result<usize, TaxonomyError> {
        Ok(assign_anchor(endpoint, self.anchors(ty)?))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ANCHOR_MAGIC);
        out.extend_from_slice(&ANCHOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.per_type.len() as u32).to_le_bytes());
        for (ty, (anchors, inertia)) in &self.per_type {
            out.extend_from_slice(&(ty.index() as u32).to_le_bytes());
            out.extend_from_slice(&(anchors.len() as u32).to_le_bytes());
            out.extend_from_slice(&inertia.to_le_bytes());
            for a in anchors {
                out.extend_from_slice(&a[0].to_le_bytes());
                out.extend_from_slice(&a[1].to_le_bytes());
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TaxonomyError> {
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8], TaxonomyError> {
            let s = buf.get(pos..pos + n).ok_or(TaxonomyError::Format("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != ANCHOR_MAGIC {
            return Err(TaxonomyError::Format("bad magic"));
        }
        let u32le = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let f64le = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        if u32le(take(4)?) != ANCHOR_VERSION {
            return Err(TaxonomyError::Format("unsupported version"));
        }
        let n = u32le(take(4)?);
        let mut set = AnchorSet::default();
        for _ in 0..n {
            let ty = AgentType::from_index(u32le(take(4)?) as usize).ok_or(TaxonomyError::Format("agent type"))?;
            let k = u32le(take(4)?) as usize;
            let inertia = f64le(take(8)?);
            let mut anchors = Vec::with_capacity(k);
            for _ in 0..k {
                let x = f64le(take(8)?);
                let y = f64le(take(8)?);
                anchors.push([x, y]);
            }
            set.per_type.insert(ty, (anchors, inertia));
        }
        if pos != buf.len() {
            return Err(TaxonomyError::Format("trailing bytes"));
        }
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<(), TaxonomyError> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TaxonomyError> {
        Self::decode(&fs::read(path)?)
    }
}

pub const ANCHOR_MAGIC: &[u8; 4] = b"JAMA";
pub const ANCHOR_VERSION: u32 = 1;

/// GT endpoints of every interacting agent in its own frame, by type.
pub fn local_endpoints(ds: &Dataset) -> BTreeMap<AgentType, Vec<Point>> {
    let mut out: BTreeMap<AgentType, Vec<Point>> = BTreeMap::new();
    for s in &ds.scenes {
        for a in s.pair {
            let fut = s.future(a);
            let end = to_local(&fut[fut.len() - 1..], &s.current_pose(a))[0];
            out.entry(s.agent_types[a]).or_default().push(end);
        }
    }
    out
}

/// Fits `k` anchors per agent type present in `ds`.
pub fn fit_anchor_set(ds: &Dataset, k: usize, seed: u64) -> Result<AnchorSet, TaxonomyError> {
    let mut set = AnchorSet::default();
    for (ty, pts) in local_endpoints(ds) {
        let fit = fit_anchors(&pts, k, seed.wrapping_add(ty.index() as u64))?;
        log::info!("{ty}: {} endpoints, inertia {:.3}", pts.len(), fit.inertia);
        set.per_type.insert(ty, (fit.centers, fit.inertia));
    }
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Behavior8,
    Anchor64,
    None,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Behavior8 => "behavior8",
            Scheme::Anchor64 => "anchor64",
            Scheme::None => "none",
        }
    }

    pub fn categories(self) -> usize {
        match self {
            Scheme::Behavior8 => 8,
            Scheme::Anchor64 => 64,
            Scheme::None => 1,
        }
    }
}

impl FromStr for Scheme {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Scheme::Behavior8, Scheme::Anchor64, Scheme::None]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TaxonomyError::UnknownScheme(s.to_string()))
    }
}

/// Category index of a GT future (agent frame) under `scheme`.
pub fn gt_category(
    gt_local: &[Point],
    ty: AgentType,
    scheme: Scheme,
    anchors: Option<&AnchorSet>,
) -> Result<usize, TaxonomyError> {
    match scheme {
        Scheme::None => Ok(0),
        Scheme::Behavior8 => Ok(classify_trajectory(gt_local, None)?.index()),
        Scheme::Anchor64 => {
            let end = *gt_local.last().ok_or(TaxonomyError::Empty)?;
            anchors.ok_or(TaxonomyError::MissingAnchors(ty))?.assign(ty, end)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn arc(total: f64, radius: f64, n: usize) -> Vec<Point> {
        (1..=n)
            .map(|i| {
                let a = total * i as f64 / n as f64;
                let s = total.signum();
                [radius * a.abs().sin(), s * radius * (1.0 - a.cos())]
            })
            .collect()
    }

    #[test]
    fn basic_categories() {
        let still: Vec<Point> = (0..16).map(|i| [0.03 * i as f64, -0.01 * i as f64]).collect();
        assert_eq!(classify_trajectory(&still, None).unwrap(), BehaviorCategory::Stationary);
        let line: Vec<Point> = (1..=16).map(|i| [2.5 * i as f64, 0.0]).collect();
        assert_eq!(classify_trajectory(&line, None).unwrap(), BehaviorCategory::Straight);
        assert_eq!(classify_trajectory(&arc(3.0, 8.0, 40), None).unwrap(), BehaviorCategory::LeftUTurn);
        assert_eq!(classify_trajectory(&arc(-3.0, 8.0, 40), None).unwrap(), BehaviorCategory::RightUTurn);
        assert_eq!(classify_trajectory(&arc(1.2, 15.0, 20), None).unwrap(), BehaviorCategory::LeftTurn);
        assert_eq!(classify_trajectory(&arc(-1.2, 15.0, 20), None).unwrap(), BehaviorCategory::RightTurn);
        let drift: Vec<Point> = (1..=16).map(|i| [2.5 * i as f64, 0.1 * i as f64]).collect();
        assert_eq!(classify_trajectory(&drift, None).unwrap(), BehaviorCategory::StraightLeft);
        assert!(classify_trajectory(&[[f64::NAN, 0.0]], None).is_err());
    }

    #[test]
    fn explicit_headings_are_unwrapped() {
        let pts = arc(3.0, 8.0, 40);
        let hs: Vec<f64> = (1..=40).map(|i| normalize_angle(3.0 * i as f64 / 40.0)).collect();
        assert_eq!(classify_trajectory(&pts, Some(&hs)).unwrap(), BehaviorCategory::LeftUTurn);
        // a full π turn wraps to -π but keeps its sign through unwrapping
        let pts = arc(PI + 0.05, 8.0, 40);
        assert_eq!(classify_trajectory(&pts, None).unwrap(), BehaviorCategory::LeftUTurn);
    }

    #[test]
    fn kmeans_trivial_cases() {
        let pts: Vec<Point> = (0..64).map(|i| [(i % 8) as f64 * 3.0, (i / 8) as f64 * 5.0]).collect();
        let fit = fit_anchors(&pts, 64, 1).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut c = fit.centers.clone();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut p = pts.clone();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, p);
        assert!(matches!(fit_anchors(&pts[..10], 64, 1), Err(TaxonomyError::TooFewPoints { .. })));
    }

    #[test]
    fn two_tight_clusters() {
        let a = [[0.0, 0.0], [0.2, 0.1], [-0.1, 0.2], [0.1, -0.2]];
        let b = [[20.0, 5.0], [20.3, 5.1], [19.8, 4.9]];
        let pts: Vec<Point> = a.iter().chain(&b).copied().collect();
        let fit = fit_anchors(&pts, 2, 7).unwrap();
        let mean = |s: &[Point]| {
            let n = s.len() as f64;
            [s.iter().map(|p| p[0]).sum::<f64>() / n, s.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let (ma, mb) = (mean(&a), mean(&b));
        let mut got = fit.centers.clone();
        got.sort_by(|x, y| x[0].partial_cmp(&y[0]).unwrap());
        for (g, w) in got.iter().zip([ma, mb]) {
            assert!((g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12);
        }
        // exhaustive check over all 2-partitions: the fitted inertia is optimal
        let n = pts.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let (l, r): (Vec<Point>, Vec<Point>) = {
                let mut l = Vec::new();
                let mut r = Vec::new();
                for (i, p) in pts.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        l.push(*p)
                    } else {
                        r.push(*p)
                    }
                }
                (l, r)
            };
            let (ml, mr) = (mean(&l), mean(&r));
            let sse: f64 = l.iter().map(|p| dist2(*p, ml)).sum::<f64>() + r.iter().map(|p| dist2(*p, mr)).sum::<f64>();
            best = best.min(sse);
        }
        assert!((fit.inertia - best).abs() < 1e-9);
    }

    #[test]
    fn kmeans_beats_worst_random_restart() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<Point> = (0..500).map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-20.0..60.0)]).collect();
        let fit = fit_anchors(&pts, 16, 0).unwrap();
        assert!(fit.converged);
        for w in fit.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        // restarts from uniformly drawn initial centres
        let mut worst: f64 = 0.0;
        for r in 0..10u64 {
            let mut rr = ChaCha8Rng::seed_from_u64(1000 + r);
            let mut centers: Vec<Point> = rand::seq::index::sample(&mut rr, pts.len(), 16).into_iter().map(|i| pts[i]).collect();
            let mut assign: Vec<usize> = pts.iter().map(|p| assign_anchor(*p, &centers)).collect();
            for _ in 0..100 {
                for (j, c) in centers.iter_mut().enumerate() {
                    let m: Vec<&Point> = pts.iter().zip(&assign).filter(|(_, a)| **a == j).map(|(p, _)| p).collect();
                    if !m.is_empty() {
                        *c = [m.iter().map(|p| p[0]).sum::<f64>() / m.len() as f64, m.iter().map(|p| p[1]).sum::<f64>() / m.len() as f64];
                    }
                }
                let next: Vec<usize> = pts.iter().map(|p| assign_anchor(*p, &centers)).collect();
                if next == assign {
                    break;
                }
                assign = next;
            }
            worst = worst.max(inertia_of(&pts, &centers, &assign));
        }
        assert!(fit.inertia <= worst, "{} vs {}", fit.inertia, worst);
    }

    #[test]
    fn anchor_assignment_rules() {
        let anchors: Vec<Point> = (0..10).map(|i| [i as f64 * 4.0, (i * i) as f64]).collect();
        assert_eq!(assign_anchor(anchors[7], &anchors), 7);
        let eq = vec![[0.0, 0.0], [9.0, 9.0], [-1.0, 0.0], [5.0, 5.0], [5.0, 5.0], [1.0, 0.0]];
        assert_eq!(assign_anchor([0.0, 0.0], &eq[2..]), 0);
        let tie = vec![[9.0, 9.0], [9.0, 9.0], [-1.0, 0.0], [7.0, 7.0], [7.0, 7.0], [1.0, 0.0]];
        assert_eq!(assign_anchor([0.0, 0.0], &tie), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let anchors: Vec<Point> = (0..64).map(|_| [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)]).collect();
        for _ in 0..10_000 {
            let e = [rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)];
            let mut best = (f64::INFINITY, 0);
            for (i, a) in anchors.iter().enumerate() {
                let d = ((e[0] - a[0]).powi(2) + (e[1] - a[1]).powi(2)).sqrt();
                if d < best.0 {
                    best = (d, i);
                }
            }
            assert_eq!(assign_anchor(e, &anchors), best.1);
        }
    }

    #[test]
    fn gt_category_schemes() {
        let line: Vec<Point> = (1..=16).map(|i| [2.5 * i as f64, 0.0]).collect();
        assert_eq!(gt_category(&line, AgentType::Vehicle, Scheme::None, None).unwrap(), 0);
        assert_eq!(
            gt_category(&line, AgentType::Vehicle, Scheme::Behavior8, None).unwrap(),
            BehaviorCategory::Straight.index()
        );
        let mut set = AnchorSet::default();
        let anchors: Vec<Point> = (0..64).map(|i| [i as f64, 0.0]).collect();
        set.per_type.insert(AgentType::Vehicle, (anchors.clone(), 1.0));
        assert_eq!(
            gt_category(&line, AgentType::Vehicle, Scheme::Anchor64, Some(&set)).unwrap(),
            assign_anchor([40.0, 0.0], &anchors)
        );
        assert!(gt_category(&line, AgentType::Cyclist, Scheme::Anchor64, Some(&set)).is_err());
        assert_eq!(AnchorSet::decode(&set.encode()).unwrap(), set);
    }

    proptest! {
        #[test]
        fn classification_is_total_and_rotation_free(pts in proptest::collection::vec((-80.0..80.0f64, -80.0..80.0f64), 1..20),
                                                    rot in -3.0..3.0f64, tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
            let local: Vec<Point> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let c = classify_trajectory(&local, None).unwrap();
            prop_assert!(BehaviorCategory::ALL.contains(&c));
            // move the whole scene; re-expressing in the agent frame recovers the category
            let origin = crate::geometry::Pose2::new(tx, ty, rot);
            let global = crate::geometry::to_global(&local, &origin);
            let back = to_local(&global, &origin);
            prop_assert_eq!(classify_trajectory(&back, None).unwrap(), c);
        }
    }
}
