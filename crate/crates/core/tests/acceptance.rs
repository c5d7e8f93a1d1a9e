//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use mcpzone::association::{associate, AssociationOptions, AssociationParams};
use mcpzone::geometry::{Point2D, Polyline};
use mcpzone::ingest::{Pole, PoleSet, WireSegment, WireSet};
use mcpzone::mcp_detect::{CircuitSet, McpGroup, McpPole};
use mcpzone::pipeline::{run_pipeline, PipelineConfig};
use mcpzone::prioritize::{score_zone, validate_weights, Factor, FactorVector, WeightVector};
use mcpzone::report::read_zones_csv;
use mcpzone::spatial_index::{KdTree, Neighbor};
use mcpzone::synth::{generate, write_territory, CorridorSpec, OutputFormat, SynthParams};
use mcpzone::zoning::{cluster_group, zone_extent, ZoningParams};

const MILE: f64 = 1609.344;
const BENCH_CHILD_ENV: &str = "MCPZONE_ACCEPTANCE_BENCH";

type Outcome = Result<String, String>;

fn dist(a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- oracles

fn oracle_radius(points: &[Point2D], q: Point2D, r: f64) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (dist(q, p), i))
        .filter(|&(d, _)| d <= r)
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

fn oracle_knn(points: &[Point2D], q: Point2D, k: usize, max_dist: f64) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (dist(q, p), i))
        .filter(|&(d, _)| d <= max_dist)
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k == 0 {
        return Vec::new();
    }
    if v.len() > k {
        v.select_nth_unstable_by(k - 1, cmp);
        v.truncate(k);
    }
    v.sort_by(cmp);
    v
}

fn same(got: &[Neighbor], want: &[(f64, usize)]) -> bool {
    got.len() == want.len()
        && got
            .iter()
            .zip(want)
            .all(|(g, &(d, i))| g.point_index == i && g.distance.to_bits() == d.to_bits())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn oracle_components(points: &[Point2D], r: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut uf = UnionFind((0..n).collect());
    for i in 0..n {
        for j in i + 1..n {
            if dist(points[i], points[j]) <= r {
                uf.union(i, j);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = uf.find(i);
        by_root.entry(root).or_default().push(i);
    }
    by_root.into_values().collect()
}

fn oracle_prim(points: &[Point2D]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        total += best[u];
        for v in 0..n {
            if !in_tree[v] {
                let d = dist(points[u], points[v]);
                if d < best[v] {
                    best[v] = d;
                }
            }
        }
    }
    total
}

/// Exhaustive association: wires within `d_max` of the pole by centroid,
/// ordered by (distance, wire id), first `k` kept. Returns wire ordinals.
fn oracle_associate(poles: &[Point2D], centroids: &[Point2D], ids: &[String], k: usize, d_max: f64) -> Vec<Vec<(f64, usize)>> {
    let mut rank = vec![0usize; ids.len()];
    let mut by_id: Vec<usize> = (0..ids.len()).collect();
    by_id.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    for (r, &w) in by_id.iter().enumerate() {
        rank[w] = r;
    }
    poles
        .iter()
        .map(|&p| {
            let mut v: Vec<(f64, usize)> = centroids
                .iter()
                .enumerate()
                .map(|(w, &c)| (dist(p, c), w))
                .filter(|&(d, _)| d <= d_max)
                .collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(rank[a.1].cmp(&rank[b.1])));
            v.truncate(k);
            v
        })
        .collect()
}

// ------------------------------------------------------------ generators

#[derive(Clone, Copy, Debug)]
enum Layout {
    Uniform,
    Lattice,
    Collinear,
    Clumped,
}

fn layout_points(rng: &mut Pcg64, n: usize, layout: Layout, side: f64) -> Vec<Point2D> {
    match layout {
        Layout::Uniform => (0..n)
            .map(|_| Point2D::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect(),
        // few distinct sites, so most points are exact duplicates
        Layout::Lattice => {
            let cells = ((n as f64).sqrt() / 3.0).ceil().max(1.0) as i64;
            let step = side / cells as f64;
            (0..n)
                .map(|_| {
                    Point2D::new(
                        rng.random_range(0..=cells) as f64 * step,
                        rng.random_range(0..=cells) as f64 * step,
                    )
                })
                .collect()
        }
        Layout::Collinear => {
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(0.0..side));
            let horizontal = rng.random_bool(0.3);
            (0..n)
                .map(|_| {
                    let t = (rng.random_range(0.0..side) / 4.0).round() * 4.0;
                    if horizontal {
                        Point2D::new(t, b)
                    } else {
                        Point2D::new(t, a * t + b)
                    }
                })
                .collect()
        }
        Layout::Clumped => {
            let centers: Vec<Point2D> = (0..rng.random_range(1..20))
                .map(|_| Point2D::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
                .collect();
            let spread = side / 30.0;
            (0..n)
                .map(|_| {
                    let c = centers[rng.random_range(0..centers.len())];
                    Point2D::new(
                        c.x + rng.random_range(-spread..spread),
                        c.y + rng.random_range(-spread..spread),
                    )
                })
                .collect()
        }
    }
}

const LAYOUTS: [Layout; 4] = [Layout::Uniform, Layout::Lattice, Layout::Collinear, Layout::Clumped];

// ------------------------------------------------------------- criteria

fn c1_spatial_index() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(1001);
    let started = Instant::now();
    let (instances, queries) = (200, 1000);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    let mut sizes = BTreeSet::new();
    for inst in 0..instances {
        let n = if inst < 20 { 10_000 } else { rng.random_range(1..=10_000) };
        let layout = LAYOUTS[inst % LAYOUTS.len()];
        let side = 1000.0 * (n as f64).sqrt() / 10.0 + 1.0;
        let points = layout_points(&mut rng, n, layout, side);
        sizes.insert(n);
        let tree = KdTree::build(&points).map_err(|e| e.to_string())?;
        if !tree.check_invariants() {
            return Err(format!("instance {inst}: tree invariants violated"));
        }
        let typical = side / (n as f64).sqrt();
        for qi in 0..queries {
            let q = match qi % 4 {
                0 | 1 => Point2D::new(rng.random_range(-0.1 * side..1.1 * side), rng.random_range(-0.1 * side..1.1 * side)),
                2 => points[rng.random_range(0..n)],
                _ => {
                    let p = points[rng.random_range(0..n)];
                    Point2D::new(p.x + typical.round(), p.y)
                }
            };
            let k = rng.random_range(1..=20);
            let max_dist = if rng.random_bool(0.3) {
                f64::INFINITY
            } else {
                rng.random_range(0.0..3.0 * typical)
            };
            let r = match qi % 5 {
                0 => 0.0,
                1 => typical.round(),
                _ => rng.random_range(0.0..3.0 * typical),
            };
            if !same(&tree.knn(q, k, max_dist), &oracle_knn(&points, q, k, max_dist)) {
                mismatches += 1;
            }
            if !same(&tree.radius_query(q, r), &oracle_radius(&points, q, r)) {
                mismatches += 1;
            }
            checked += 2;
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{instances} instances (max {} points), {checked} queries, {mismatches} mismatches, {:.1} s",
        sizes.last().unwrap(),
        secs(elapsed)
    );
    if mismatches == 0 && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn group_from(points: &[Point2D], rng: &mut Pcg64) -> McpGroup {
    let key = CircuitSet::new(["A", "B"]).unwrap();
    let mut ordinals: Vec<usize> = (0..points.len()).map(|i| i * 3 + 1).collect();
    ordinals.shuffle(rng);
    McpGroup {
        members: points
            .iter()
            .zip(&ordinals)
            .map(|(&location, &pole)| McpPole {
                pole,
                pole_id: format!("P{pole}"),
                location,
                circuits: key.clone(),
            })
            .collect(),
        key,
    }
}

fn c2_clustering() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(2002);
    let params = ZoningParams {
        min_poles: 1,
        min_extent: 0.0,
        ..Default::default()
    };
    let r = params.radius;
    let mut mismatches = 0;
    let mut cluster_time = Duration::ZERO;
    let mut total_clusters = 0;
    let groups = 100;
    for g in 0..groups {
        let n = if g < 10 { 2000 } else { rng.random_range(1..=2000) };
        let degree: f64 = rng.random_range(0.3..4.0);
        let side = (n as f64 * std::f64::consts::PI * r * r / degree).sqrt();
        let points = if g % 5 == 4 {
            // lattice at exactly r: every link sits on the boundary
            let cols = (n as f64).sqrt().ceil() as usize;
            (0..n)
                .filter(|_| rng.random_bool(0.8))
                .map(|i| Point2D::new((i % cols) as f64 * r, (i / cols) as f64 * r))
                .collect()
        } else {
            layout_points(&mut rng, n, LAYOUTS[g % LAYOUTS.len()], side)
        };
        if points.is_empty() {
            continue;
        }
        let group = group_from(&points, &mut rng);
        let t = Instant::now();
        let clusters = cluster_group(&group, &params);
        cluster_time += t.elapsed();
        total_clusters += clusters.len();

        let got: BTreeSet<BTreeSet<usize>> = clusters.into_iter().map(|c| c.into_iter().collect()).collect();
        let want: BTreeSet<BTreeSet<usize>> = oracle_components(&points, r)
            .into_iter()
            .map(|c| c.into_iter().map(|i| group.members[i].pole).collect())
            .collect();
        if got != want {
            mismatches += 1;
        }
    }
    let detail = format!(
        "{groups} groups (up to 2000 members), {total_clusters} clusters, {mismatches} mismatches, clustering {:.2} s",
        secs(cluster_time)
    );
    if mismatches == 0 && cluster_time < Duration::from_secs(30) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_extent() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(3003);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let clusters = 500;
    for c in 0..clusters {
        let n = rng.random_range(1..=200);
        let side = rng.random_range(10.0..5000.0);
        let points = layout_points(&mut rng, n, LAYOUTS[c % LAYOUTS.len()], side);
        let got = zone_extent(&points);
        let want = oracle_prim(&points);
        let rel = if want == 0.0 {
            if got == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (got - want).abs() / want
        };
        worst = worst.max(rel);
        if rel > 1e-6 {
            failures.push(format!("cluster {c}: {got} vs {want}"));
        }
    }
    let spacings = [1.0, 0.5, 7.5, 12.25, 60.0, 100.0, 180.0, 200.0];
    let mut collinear = 0;
    for (i, &s) in spacings.iter().cycle().take(120).enumerate() {
        let n = rng.random_range(2..=200);
        let x0 = rng.random_range(-5000..5000) as f64;
        let y0 = rng.random_range(-5000..5000) as f64;
        let mut points: Vec<Point2D> = (0..n)
            .map(|j| {
                let t = j as f64 * s;
                if i % 2 == 0 {
                    Point2D::new(x0 + t, y0)
                } else {
                    Point2D::new(x0, y0 + t)
                }
            })
            .collect();
        points.shuffle(&mut rng);
        let got = zone_extent(&points);
        let want = (n - 1) as f64 * s;
        if got != want {
            failures.push(format!("collinear n={n} spacing={s}: {got} vs {want}"));
        }
        collinear += 1;
    }
    let detail = format!(
        "{clusters} random clusters (worst rel err {worst:.2e}), {collinear} collinear clusters exact, {} failures",
        failures.len()
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", failures[0]))
    }
}

fn vertical_wire(id: String, circuit: &str, c: Point2D, half: f64) -> WireSegment {
    let g = Polyline::new(vec![Point2D::new(c.x, c.y - half), Point2D::new(c.x, c.y + half)]).unwrap();
    WireSegment {
        wire_id: id,
        circuit_id: circuit.into(),
        length: g.arc_length(),
        geometry: g,
        ampacity: None,
        declared_pole_ids: None,
    }
}

fn c4_association() -> Outcome {
    let params = AssociationParams::default();
    if params.k != 3 || params.d_max != 50.0 {
        return Err(format!("defaults are k={} d_max={}", params.k, params.d_max));
    }
    // constructed cutoff case
    let poles = PoleSet::new(vec![Pole {
        pole_id: "P".into(),
        location: Point2D::new(0.0, 0.0),
        metadata: Default::default(),
    }])
    .unwrap();
    let ds = [10.0, 20.0, 49.999, 50.0, 50.001];
    let wires = WireSet::new(
        ds.iter()
            .enumerate()
            .map(|(i, &d)| vertical_wire(format!("W{i}"), &format!("C{i}"), Point2D::new(d, 0.0), 5.0))
            .collect(),
    )
    .unwrap();
    let wide = AssociationOptions {
        params: AssociationParams { k: 100, d_max: 50.0 },
        ..Default::default()
    };
    let before = associate(&poles, &wires, &wide).map_err(|e| e.to_string())?;
    let after = associate(&poles, &wires, &AssociationOptions::default()).map_err(|e| e.to_string())?;
    let cand: Vec<f64> = before.for_pole(0).iter().map(|a| a.distance).collect();
    let kept: Vec<f64> = after.for_pole(0).iter().map(|a| a.distance).collect();
    if cand != [10.0, 20.0, 49.999, 50.0] || kept != [10.0, 20.0, 49.999] {
        return Err(format!("cutoff case: candidates {cand:?}, kept {kept:?}"));
    }

    // random territories against brute force
    let mut rng = Pcg64::seed_from_u64(4004);
    let mut mismatches = 0;
    let mut max_dims = (0, 0);
    let territories = 100;
    for t in 0..territories {
        let (np, nw) = if t < 5 {
            (5000, 5000)
        } else {
            (rng.random_range(1..=5000), rng.random_range(1..=5000))
        };
        max_dims = (max_dims.0.max(np), max_dims.1.max(nw));
        let side = ((nw as f64 * std::f64::consts::PI * 2500.0 / 3.0).sqrt()).ceil() as i64;
        // integer coordinates give exact distance ties and exact boundary hits
        let point = |rng: &mut Pcg64| Point2D::new(rng.random_range(0..=side) as f64, rng.random_range(0..=side) as f64);
        let pole_pts: Vec<Point2D> = (0..np).map(|_| point(&mut rng)).collect();
        let centroids: Vec<Point2D> = (0..nw).map(|_| point(&mut rng)).collect();
        let ids: Vec<String> = (0..nw).map(|i| format!("{:05x}-{i}", rng.random_range(0..0xfffff))).collect();
        let poles = PoleSet::new(
            pole_pts
                .iter()
                .enumerate()
                .map(|(i, &location)| Pole {
                    pole_id: format!("P{i}"),
                    location,
                    metadata: Default::default(),
                })
                .collect(),
        )
        .unwrap();
        let wires = WireSet::new(
            centroids
                .iter()
                .zip(&ids)
                .map(|(&c, id)| vertical_wire(id.clone(), "C", c, rng.random_range(1..=40) as f64))
                .collect(),
        )
        .unwrap();
        let table = associate(&poles, &wires, &AssociationOptions::default()).map_err(|e| e.to_string())?;
        let want = oracle_associate(&pole_pts, &centroids, &ids, 3, 50.0);
        for (row, exp) in table.rows().iter().zip(&want) {
            let ok = row.len() == exp.len()
                && row
                    .iter()
                    .zip(exp)
                    .all(|(a, &(d, w))| a.wire == w && a.distance.to_bits() == d.to_bits());
            if !ok {
                mismatches += 1;
            }
        }
    }
    let detail = format!(
        "cutoff case 4 candidates → 3 kept; {territories} territories (up to {} poles × {} wires), {mismatches} mismatched poles",
        max_dims.0, max_dims.1
    );
    if mismatches == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// (circuits, length in miles, spacing in meters)
const PLANTED: [(usize, f64, f64); 10] = [
    (2, 0.3, 180.0),
    (3, 0.7, 60.0),
    (2, 1.4, 170.0),
    (3, 2.3, 90.0),
    (2, 2.6, 120.0),
    (2, 3.5, 100.0),
    (3, 4.4, 150.0),
    (2, 5.2, 75.0),
    (3, 5.6, 140.0),
    (2, 6.0, 160.0),
];

fn recovery_params() -> SynthParams {
    SynthParams {
        seed: 5005,
        territory_m: 40_000.0,
        background_poles: 50_000,
        background_circuits: 200,
        jitter_m: 5.0,
        corridors: PLANTED
            .iter()
            .enumerate()
            .map(|(i, &(circuits, miles, spacing))| CorridorSpec {
                circuits,
                length_m: miles * MILE,
                spacing_m: spacing,
                heading_deg: (i * 37 % 180) as f64,
            })
            .collect(),
        ..Default::default()
    }
}

struct RecoveryRun {
    dir: tempfile::TempDir,
    cfg: PipelineConfig,
}

fn c5_recovery(run: &RecoveryRun) -> Outcome {
    let params = recovery_params();
    let sigma = params.jitter_m;
    let territory = generate(&params).map_err(|e| e.to_string())?;
    let summary = run_pipeline(&run.cfg).map_err(|e| e.to_string())?;
    let zones = read_zones_csv(&run.cfg.out.join("zones.csv")).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    if zones.len() != 10 || summary.counts.zones != 10 {
        problems.push(format!("{} zones reported", zones.len()));
    }
    let mut tally = [0usize; 6];
    let mut worst_ratio = 0.0f64;
    for (i, c) in territory.truth.corridors.iter().enumerate() {
        let n = c.pole_ids.len();
        let tol = 3.0 * sigma * (n as f64).sqrt();
        let analytic = c.expected_extent_m;
        let mi = analytic / MILE;
        // each planted extent must sit clear of bin edges by more than the tolerance
        let edge_gap = (1..=5).map(|e| (mi - e as f64).abs() * MILE).fold(f64::INFINITY, f64::min);
        if edge_gap <= tol {
            problems.push(format!("corridor {i}: planted extent {analytic} m too close to a bin edge"));
        }
        tally[(mi.floor() as usize).min(5)] += 1;
        let Some(z) = zones.iter().find(|z| z.circuits == c.circuits) else {
            problems.push(format!("corridor {i}: no zone with circuits {:?}", c.circuits));
            continue;
        };
        let got: BTreeSet<&String> = z.pole_ids.iter().collect();
        let want: BTreeSet<&String> = c.pole_ids.iter().collect();
        if got != want {
            problems.push(format!("corridor {i}: {} members vs {} planted", got.len(), want.len()));
        }
        let err = (z.extent_m - analytic).abs();
        worst_ratio = worst_ratio.max(err / tol);
        if err > tol {
            problems.push(format!("corridor {i}: extent {} vs {analytic} (tol {tol:.1})", z.extent_m));
        }
    }
    let hist = std::fs::read_to_string(run.cfg.out.join("histogram.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> = hist.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let counts: Vec<usize> = rows.iter().map(|r| r[2].parse().unwrap_or(usize::MAX)).collect();
    let overflow_row = rows.last().map(|r| (r[0].as_str(), r[1].as_str()));
    if counts != tally || overflow_row != Some(("5", "inf")) {
        problems.push(format!("histogram {counts:?} vs planted tally {tally:?}"));
    }
    let detail = format!(
        "{} poles, {} zones, histogram {counts:?} (≥5 mi: {}), worst extent error {:.2} of 3σ√n",
        summary.counts.poles,
        zones.len(),
        tally[5],
        worst_ratio
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn c6_scoring() -> Outcome {
    let w = WeightVector::default();
    let mut problems = Vec::new();
    if w.values() != [30.0, 20.0, 10.0, 20.0, 10.0, 10.0] || w.sum() != 100.0 {
        problems.push(format!("default weights {:?}", w.values()));
    }
    if validate_weights(w.values()).ok() != Some(w) {
        problems.push("default weights fail validation".into());
    }
    let ones = score_zone(&FactorVector::uniform(1.0).unwrap(), &w);
    if ones != 100.0 {
        problems.push(format!("all-ones score {ones}"));
    }
    for f in Factor::ALL {
        let mut v = [0.0; 6];
        v[Factor::ALL.iter().position(|&g| g == f).unwrap()] = 1.0;
        let s = score_zone(&FactorVector::new(v).unwrap(), &w);
        if s != w.get(f) {
            problems.push(format!("unit probe {f}: {s}"));
        }
    }
    let mut rng = Pcg64::seed_from_u64(6006);
    let pairs = 10_000;
    let (mut lin_fail, mut mono_fail, mut oracle_fail) = (0, 0, 0);
    let wv = w.values();
    for _ in 0..pairs {
        let a: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
        let b: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let fa = FactorVector::new(a).unwrap();
        let fb = FactorVector::new(b).unwrap();
        let mix = FactorVector::new(std::array::from_fn(|i| alpha * a[i] + (1.0 - alpha) * b[i])).unwrap();
        let (sa, sb) = (score_zone(&fa, &w), score_zone(&fb, &w));
        if (score_zone(&mix, &w) - (alpha * sa + (1.0 - alpha) * sb)).abs() > 1e-9 {
            lin_fail += 1;
        }
        let hi = FactorVector::new(std::array::from_fn(|i| a[i].max(b[i]))).unwrap();
        if score_zone(&hi, &w) < sa.max(sb) {
            mono_fail += 1;
        }
        let direct: f64 = (0..6).map(|i| wv[i] * a[i]).sum();
        if (direct - sa).abs() > 1e-12 {
            oracle_fail += 1;
        }
    }
    if lin_fail + mono_fail + oracle_fail > 0 {
        problems.push(format!(
            "{lin_fail} linearity, {mono_fail} monotonicity, {oracle_fail} weighted-sum failures"
        ));
    }
    let detail = format!("weights 30/20/10/20/10/10, all-ones = {ones}, 6 unit probes, {pairs} random pairs");
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn c7_determinism(run: &RecoveryRun) -> Outcome {
    let zones = read_zones_csv(&run.cfg.out.join("zones.csv")).map_err(|e| e.to_string())?;
    if zones.is_empty() {
        return Err("no zones to rank".into());
    }
    let mut factors = String::from(
        "zone_id,customer_impact,redundancy_loss,critical_infrastructure,asset_condition,restoration_complexity,outage_risk\n",
    );
    let mut rng = Pcg64::seed_from_u64(7007);
    for z in &zones {
        let v: Vec<String> = (0..6).map(|_| format!("{:.3}", rng.random_range(0.0..500.0))).collect();
        factors += &format!("{},{}\n", z.zone_id, v.join(","));
    }
    let factors_path = run.dir.path().join("factors.csv");
    std::fs::write(&factors_path, factors).map_err(|e| e.to_string())?;

    let files = ["zones.geojson", "zones.csv", "histogram.csv", "ranking.csv"];
    let mut outputs: Vec<(String, Vec<Vec<u8>>)> = Vec::new();
    for (label, threads) in [("1 thread", Some(1)), ("4 threads", Some(4)), ("4 threads again", Some(4))] {
        let cfg = PipelineConfig {
            factors: Some(factors_path.clone()),
            threads,
            out: run.dir.path().join(label.replace(' ', "-")),
            ..run.cfg.clone()
        };
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let bytes = files
            .iter()
            .map(|f| std::fs::read(cfg.out.join(f)).map_err(|e| format!("{f}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        outputs.push((label.into(), bytes));
    }
    let mut diffs = Vec::new();
    for (label, bytes) in &outputs[1..] {
        for (f, (a, b)) in files.iter().zip(outputs[0].1.iter().zip(bytes)) {
            if a != b {
                diffs.push(format!("{f} differs ({label})"));
            }
        }
    }
    // the earlier unranked run must agree on the shared files too
    for (f, a) in files.iter().zip(&outputs[0].1).take(3) {
        if std::fs::read(run.cfg.out.join(f)).ok().as_ref() != Some(a) {
            diffs.push(format!("{f} differs from the unranked run"));
        }
    }
    let detail = format!("{} files × 4 runs (1 and 4 threads), {} zones ranked", files.len(), zones.len());
    if diffs.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", diffs.join(", ")))
    }
}

fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

/// Runs in a fresh process so the memory peak covers only the pipeline.
fn bench_child(spec: &str) -> ! {
    let mut parts = spec.split('|');
    let (poles, wires, out) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
    let cfg = PipelineConfig {
        poles: Some(PathBuf::from(poles)),
        wires: Some(PathBuf::from(wires)),
        out: PathBuf::from(out),
        ..Default::default()
    };
    let started = Instant::now();
    match run_pipeline(&cfg) {
        Ok(s) => {
            println!(
                "BENCH elapsed_s={} peak_kb={} poles={} wires={} zones={}",
                secs(started.elapsed()),
                peak_rss_kb().unwrap_or(0),
                s.counts.poles,
                s.counts.wires,
                s.counts.zones
            );
            std::process::exit(0)
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1)
        }
    }
}

fn build_time(n: usize, rng: &mut Pcg64) -> f64 {
    let points: Vec<Point2D> = (0..n)
        .map(|_| Point2D::new(rng.random_range(0.0..1e5), rng.random_range(0.0..1e5)))
        .collect();
    let mut times: Vec<f64> = (0..9)
        .map(|_| {
            let t = Instant::now();
            let tree = KdTree::build(&points).unwrap();
            let e = secs(t.elapsed());
            std::hint::black_box(tree);
            e
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn c8_scale(dir: &Path) -> Outcome {
    let corridors: Vec<CorridorSpec> = (0..12)
        .map(|i| CorridorSpec {
            circuits: 2 + i % 2,
            length_m: 800.0 + 700.0 * i as f64,
            spacing_m: 80.0 + 7.0 * i as f64,
            heading_deg: (i * 29) as f64,
        })
        .collect();
    let corridor_poles: usize = corridors.iter().map(|c| (c.length_m / c.spacing_m).floor() as usize + 1).sum();
    let corridor_wires: usize = corridors
        .iter()
        .map(|c| ((c.length_m / c.spacing_m).floor() as usize + 1) * c.circuits)
        .sum();
    let params = SynthParams {
        seed: 8008,
        territory_m: 60_000.0,
        background_poles: 100_000 - corridor_poles,
        background_wires: 150_000 - corridor_wires,
        background_circuits: 500,
        corridors,
        ..Default::default()
    };
    let territory = generate(&params).map_err(|e| e.to_string())?;
    let files = write_territory(&territory, &dir.join("in"), OutputFormat::Csv).map_err(|e| e.to_string())?;
    drop(territory);

    let spec = format!("{}|{}|{}", files.poles.display(), files.wires.display(), dir.join("out").display());
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let wall = Instant::now();
    let out = Command::new(exe)
        .env(BENCH_CHILD_ENV, spec)
        .output()
        .map_err(|e| e.to_string())?;
    let wall = secs(wall.elapsed());
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with("BENCH "))
        .ok_or_else(|| format!("benchmark child failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    let field = |name: &str| -> f64 {
        line.split_whitespace()
            .find_map(|kv| kv.strip_prefix(&format!("{name}=")))
            .and_then(|v| v.parse().ok())
            .unwrap_or(f64::NAN)
    };
    let (elapsed, peak_kb) = (field("elapsed_s"), field("peak_kb"));
    let (poles, wires, zones) = (field("poles"), field("wires"), field("zones"));

    let mut rng = Pcg64::seed_from_u64(8009);
    let sizes = [10_000usize, 30_000, 100_000];
    let times: Vec<f64> = sizes.iter().map(|&n| build_time(n, &mut rng)).collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();

    let peak_gb = peak_kb / (1024.0 * 1024.0);
    let detail = format!(
        "{poles} poles / {wires} wires → {zones} zones in {elapsed:.1} s (process {wall:.1} s), peak {:.0} MB; \
         KD build {:.1}/{:.1}/{:.1} ms at 10k/30k/100k, log-log slope {slope:.2}",
        peak_kb / 1024.0,
        times[0] * 1e3,
        times[1] * 1e3,
        times[2] * 1e3
    );
    let ok = poles == 100_000.0
        && wires == 150_000.0
        && zones == 12.0
        && elapsed < 60.0
        && peak_kb > 0.0
        && peak_gb < 2.0
        && slope < 2.0;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    if let Ok(spec) = std::env::var(BENCH_CHILD_ENV) {
        bench_child(&spec);
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{n}] {name}: {detail}");
    };

    report(1, "spatial index matches linear scan", c1_spatial_index());
    report(2, "clustering matches union-find components", c2_clustering());
    report(3, "extent matches exhaustive MST", c3_extent());
    report(4, "association cutoff and brute-force equivalence", c4_association());

    let dir = tempfile::tempdir().expect("temp dir");
    let recovery = (|| -> Result<RecoveryRun, String> {
        let territory = generate(&recovery_params()).map_err(|e| e.to_string())?;
        let files = write_territory(&territory, &dir.path().join("in"), OutputFormat::Csv).map_err(|e| e.to_string())?;
        Ok(RecoveryRun {
            cfg: PipelineConfig {
                poles: Some(files.poles),
                wires: Some(files.wires),
                out: dir.path().join("out"),
                ..Default::default()
            },
            dir: tempfile::tempdir().map_err(|e| e.to_string())?,
        })
    })();
    match &recovery {
        Ok(run) => report(5, "ground-truth recovery on a synthetic territory", c5_recovery(run)),
        Err(e) => report(5, "ground-truth recovery on a synthetic territory", Err(e.clone())),
    }
    report(6, "scoring conformance", c6_scoring());
    match &recovery {
        Ok(run) => report(7, "deterministic outputs across thread counts", c7_determinism(run)),
        Err(e) => report(7, "deterministic outputs across thread counts", Err(e.clone())),
    }
    let bench_dir = tempfile::tempdir().expect("temp dir");
    report(8, "scale benchmark", c8_scale(bench_dir.path()));

    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
