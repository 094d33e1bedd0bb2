//! The decision loop: frontier detection, information-gain scoring over the
//! predicted ensemble, A* planning, and the sense-predict-plan-move cycle.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::grid::{BinaryGrid, Cell, CellState, OccupancyGrid, Pose, NEIGHBORS4, NEIGHBORS8};
use crate::metrics::{coverage, map_iou};
use crate::nlos::{backproject, carve, laplacian_filter, NlosEvidence};
use crate::normals::{estimate_normals, NormalField};
use crate::predict::{predict_builtin, predict_external, ExternalPredictorError, PredictedEnsemble, PredictorInput};
use crate::ray::visible_cells;
use crate::spad::{simulate_scan, SensorConfig};

/// A connected cluster of Free cells bordering Unknown space.
#[derive(Debug, Clone)]
pub struct Frontier {
    pub id: usize,
    /// Row-major sorted frontier cells.
    pub cells: Vec<Cell>,
    /// Mean of cell centers, continuous cell coordinates.
    pub centroid: (f64, f64),
    pub size: usize,
}

impl Frontier {
    /// Frontier cell nearest the centroid (ties row-major); used as the
    /// viewpoint for scoring and the goal for planning.
    pub fn snapped_centroid(&self) -> Cell {
        let mut best = self.cells[0];
        let mut best_d = f64::INFINITY;
        for &c in &self.cells {
            let (cx, cy) = c.center();
            let d = (cx - self.centroid.0).powi(2) + (cy - self.centroid.1).powi(2);
            // cells are row-major sorted, so strict < keeps the first minimum
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

/// True for Free cells with at least one Unknown 4-neighbor.
pub fn is_frontier_cell(belief: &OccupancyGrid, cell: Cell) -> bool {
    if belief.get(cell) != CellState::Free {
        return false;
    }
    NEIGHBORS4.iter().any(|&(dx, dy)| {
        let n = Cell::new(cell.x + dx, cell.y + dy);
        belief.in_bounds(n) && belief.get(n) == CellState::Unknown
    })
}

/// Cluster frontier cells (8-connectivity), filter by `min_size`, sort by
/// descending size then row-major first cell.
pub fn detect_frontiers(belief: &OccupancyGrid, min_size: usize) -> Vec<Frontier> {
    let mut mask = BinaryGrid::like(belief);
    for (c, _) in belief.iter_cells() {
        if is_frontier_cell(belief, c) {
            mask.set(c, true);
        }
    }
    let mut seen = BinaryGrid::like(belief);
    let mut clusters: Vec<Vec<Cell>> = Vec::new();
    for (c, _) in belief.iter_cells() {
        if !mask.get(c) || seen.get(c) {
            continue;
        }
        let mut cluster = Vec::new();
        let mut queue = VecDeque::new();
        queue.push_back(c);
        seen.set(c, true);
        while let Some(cur) = queue.pop_front() {
            cluster.push(cur);
            for &(dx, dy) in &NEIGHBORS8 {
                let n = Cell::new(cur.x + dx, cur.y + dy);
                if mask.get(n) && !seen.get(n) {
                    seen.set(n, true);
                    queue.push_back(n);
                }
            }
        }
        cluster.sort();
        clusters.push(cluster);
    }
    clusters.retain(|c| c.len() >= min_size);
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters
        .into_iter()
        .enumerate()
        .map(|(id, cells)| {
            let (mut sx, mut sy) = (0.0, 0.0);
            for c in &cells {
                let (x, y) = c.center();
                sx += x;
                sy += y;
            }
            let n = cells.len() as f64;
            Frontier {
                id,
                size: cells.len(),
                centroid: (sx / n, sy / n),
                cells,
            }
        })
        .collect()
}

/// Expected newly observed area from a frontier viewpoint, averaged over
/// ensemble members and discounted by per-cell disagreement.
pub fn information_gain(
    frontier: &Frontier,
    ensemble: &PredictedEnsemble,
    belief: &OccupancyGrid,
    sensor: &SensorConfig,
    n_rays: usize,
) -> f64 {
    let viewpoint = Pose::at_cell(frontier.snapped_centroid());
    let mut total = 0.0;
    for member in &ensemble.members {
        let vis = visible_cells(member, viewpoint, n_rays, sensor.max_range);
        let mut gain = 0.0;
        for (c, _) in vis {
            if belief.get(c) == CellState::Unknown {
                gain += 1.0 - ensemble.disagreement_at(c) / 2.0;
            }
        }
        total += gain;
    }
    total / ensemble.members.len() as f64
}

/// 4-connected shortest path over Free belief cells, unit step cost,
/// Euclidean heuristic; ties broken by smaller heuristic then row-major cell
/// order. `None` when the goal is unreachable.
pub fn plan_path(belief: &OccupancyGrid, start: Cell, goal: Cell) -> Option<Vec<Cell>> {
    if belief.get(start) != CellState::Free || belief.get(goal) != CellState::Free {
        return None;
    }
    if start == goal {
        return Some(vec![start]);
    }
    let w = belief.width();
    let idx = |c: Cell| c.y as usize * w + c.x as usize;
    let heur = |c: Cell| {
        let dx = (c.x - goal.x) as f64;
        let dy = (c.y - goal.y) as f64;
        (dx * dx + dy * dy).sqrt()
    };
    #[derive(PartialEq)]
    struct Node {
        f: f64,
        h: f64,
        cell: Cell,
    }
    impl Eq for Node {}
    impl Ord for Node {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // BinaryHeap is a max-heap; invert for min-priority with the
            // tie-break chain f, then h, then row-major cell order.
            other
                .f
                .partial_cmp(&self.f)
                .unwrap()
                .then(other.h.partial_cmp(&self.h).unwrap())
                .then((other.cell.y, other.cell.x).cmp(&(self.cell.y, self.cell.x)))
        }
    }
    impl PartialOrd for Node {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    let mut dist = vec![u32::MAX; belief.len()];
    let mut prev = vec![None; belief.len()];
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = 0;
    heap.push(Node {
        f: heur(start),
        h: heur(start),
        cell: start,
    });
    while let Some(Node { cell, .. }) = heap.pop() {
        if cell == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(p) = prev[idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        let g = dist[idx(cell)];
        for &(dx, dy) in &NEIGHBORS4 {
            let n = Cell::new(cell.x + dx, cell.y + dy);
            if !belief.in_bounds(n) || belief.get(n) != CellState::Free {
                continue;
            }
            let ng = g + 1;
            if ng < dist[idx(n)] {
                dist[idx(n)] = ng;
                prev[idx(n)] = Some(cell);
                let h = heur(n);
                heap.push(Node {
                    f: ng as f64 + h,
                    h,
                    cell: n,
                });
            }
        }
    }
    None
}

/// Single-source BFS distances over Free cells (unit costs make BFS exact).
pub fn bfs_distances(belief: &OccupancyGrid, start: Cell) -> Vec<u32> {
    let w = belief.width();
    let idx = |c: Cell| c.y as usize * w + c.x as usize;
    let mut dist = vec![u32::MAX; belief.len()];
    if belief.get(start) != CellState::Free {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist[idx(start)] = 0;
    queue.push_back(start);
    while let Some(cur) = queue.pop_front() {
        let d = dist[idx(cur)];
        for &(dx, dy) in &NEIGHBORS4 {
            let n = Cell::new(cur.x + dx, cur.y + dy);
            if belief.in_bounds(n)
                && belief.get(n) == CellState::Free
                && dist[idx(n)] == u32::MAX
            {
                dist[idx(n)] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Pick the frontier maximizing `score - lambda * path_cost` among reachable
/// frontiers; ties go to lower cost, then detection order. `None` signals
/// exploration complete.
pub fn select_frontier(
    frontiers: &[Frontier],
    scores: &[f64],
    path_costs: &[Option<u32>],
    lambda: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64, u32)> = None;
    for (i, f) in frontiers.iter().enumerate() {
        let Some(cost) = path_costs[i] else { continue };
        let utility = scores[i] - lambda * cost as f64;
        let replace = match best {
            None => true,
            Some((_, bu, bc)) => {
                utility > bu + 1e-12
                    || ((utility - bu).abs() <= 1e-12 && cost < bc)
            }
        };
        if replace {
            best = Some((f.id, utility, cost));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Exploration policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// LOS sensing only, information-gain frontier selection.
    Los,
    /// LOS plus carving and back-projection evidence.
    Nlos,
    /// Classic nearest-frontier baseline (LOS sensing).
    NearestFrontier,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Los => "los",
            Mode::Nlos => "nlos",
            Mode::NearestFrontier => "nearest_frontier",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "los" | "LOS" => Ok(Mode::Los),
            "nlos" | "NLOS" => Ok(Mode::Nlos),
            "nearest_frontier" | "nearest" => Ok(Mode::NearestFrontier),
            other => Err(format!("unknown mode {other:?} (expected los|nlos|nearest_frontier)")),
        }
    }
}

/// Which prediction backend the loop calls each step.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    /// Morphological-closing ensemble over `ExploreParams::radii`.
    Builtin,
    /// Subprocess exchanging PGM files; see `predict_external`.
    External {
        command: String,
        k: usize,
        timeout: std::time::Duration,
    },
}

#[derive(Debug, Clone)]
pub struct ExploreParams {
    pub mode: Mode,
    pub steps: usize,
    /// Peak separation gap, bins.
    pub gap: usize,
    /// Laplacian filter percentile.
    pub filter_percentile: f64,
    /// Closing radii of the built-in predictor ensemble.
    pub radii: Vec<i32>,
    pub min_frontier_size: usize,
    /// Distance penalty per path cell in frontier utility.
    pub lambda: f64,
    /// Forced replan interval, steps.
    pub replan_interval: usize,
    /// Keep per-step majority predicted maps in the trace.
    pub record_maps: bool,
    pub predictor: PredictorSpec,
    /// Write a belief snapshot PNG every this many steps; 0 disables.
    pub snapshot_interval: usize,
    /// Directory receiving snapshot PNGs.
    pub snapshot_dir: Option<std::path::PathBuf>,
}

impl Default for ExploreParams {
    fn default() -> Self {
        ExploreParams {
            mode: Mode::Nlos,
            steps: 1000,
            gap: 3,
            filter_percentile: 97.0,
            radii: vec![1, 2, 3],
            min_frontier_size: 5,
            lambda: 1.0,
            replan_interval: 20,
            record_maps: false,
            predictor: PredictorSpec::Builtin,
            snapshot_interval: 0,
            snapshot_dir: None,
        }
    }
}

/// One trace row per timestep.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub t: usize,
    pub pose: Pose,
    pub coverage: f64,
    pub iou: f64,
    /// Active frontier id, -1 when none.
    pub frontier_id: i64,
    /// Cumulative path length, cells.
    pub path_len: usize,
}

#[derive(Debug, Clone)]
pub struct ExplorationTrace {
    pub mode: Mode,
    pub records: Vec<TraceRecord>,
    /// Final belief at termination.
    pub final_belief: OccupancyGrid,
    pub final_evidence: BinaryGrid,
    pub carved: BTreeSet<Cell>,
    /// Majority predicted map per step, when requested.
    pub predicted_maps: Vec<OccupancyGrid>,
}

impl ExplorationTrace {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "t,x,y,coverage,iou,frontier_id,path_len")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.3},{:.3},{:.6},{:.6},{},{}",
                r.t, r.pose.x, r.pose.y, r.coverage, r.iou, r.frontier_id, r.path_len
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("start pose {0:?} is not on a Free ground-truth cell")]
    BadStart(Cell),
    #[error("robot stepped onto ground-truth occupied cell {0} at t={1}; belief was unsound")]
    Collision(Cell, usize),
    #[error("external predictor failed: {0}")]
    Predictor(#[from] ExternalPredictorError),
    #[error("snapshot failed: {0}")]
    Snapshot(#[from] crate::grid::GridError),
}

/// Run the sense-predict-plan-move loop for up to `params.steps` steps.
///
/// Terminates early when no reachable frontier remains.
pub fn run_exploration(
    gt: &OccupancyGrid,
    start: Pose,
    sensor: &SensorConfig,
    params: &ExploreParams,
) -> Result<ExplorationTrace, ExploreError> {
    if gt.get(start.cell()) != CellState::Free {
        return Err(ExploreError::BadStart(start.cell()));
    }
    let normals: NormalField = estimate_normals(gt);
    let mut belief = OccupancyGrid::unknown_like(gt);
    let mut carved: BTreeSet<Cell> = BTreeSet::new();
    let mut evidence = BinaryGrid::like(gt);
    let mut pose = Pose::at_cell(start.cell());
    let mut records = Vec::new();
    let mut predicted_maps = Vec::new();
    let mut path: Vec<Cell> = Vec::new();
    let mut path_pos = 0usize;
    let mut active_frontier: i64 = -1;
    let mut goal_cells: Vec<Cell> = Vec::new();
    let mut path_len = 0usize;
    let mut last_plan: Option<usize> = None;

    for t in 0..=params.steps {
        // Sense: LOS observation, overriding any optimistic carve.
        for (c, s) in visible_cells(gt, pose, sensor.n_primary, sensor.max_range) {
            belief.set(c, s);
            carved.remove(&c);
        }
        // NLOS evidence.
        if params.mode == Mode::Nlos {
            let scan = simulate_scan(gt, &normals, pose, sensor);
            let newly_carved = carve(&mut belief, &scan, params.gap);
            carved.extend(newly_carved);
            let bp = backproject(&scan, gt.width(), gt.height(), gt.resolution(), params.gap);
            let filtered = laplacian_filter(&bp, params.filter_percentile);
            evidence.union_with(&filtered);
            // Evidence on cells meanwhile carved or observed non-occupied is
            // stale; drop it.
            let nlos_ev = NlosEvidence::new(carved.clone(), evidence);
            evidence = nlos_ev.occupied_evidence;
            for (c, s) in belief.iter_cells() {
                if s == CellState::Free && evidence.get(c) {
                    evidence.set(c, false);
                }
            }
        }
        // Predict.
        let input = PredictorInput::new(belief.clone(), evidence.clone());
        let ensemble = match &params.predictor {
            PredictorSpec::Builtin => predict_builtin(&input, &params.radii),
            PredictorSpec::External { command, k, timeout } => {
                let dir = std::env::temp_dir()
                    .join(format!("nlx-predict-{}", std::process::id()));
                std::fs::create_dir_all(&dir)
                    .map_err(ExternalPredictorError::Io)?;
                predict_external(&input, command, *k, *timeout, &dir)?
            }
        };
        let majority = ensemble.majority_map();
        let cov = coverage(&belief, gt).expect("belief shares gt lattice");
        let iou = map_iou(&majority, gt).expect("majority map shares gt lattice");
        if params.record_maps {
            predicted_maps.push(majority);
        }

        // Plan. Replan when the path runs out, the interval elapses, newly
        // believed-occupied cells invalidate it, or the goal frontier has
        // dissolved (all of its cells observed past the boundary).
        let need_replan = path_pos + 1 >= path.len()
            || last_plan.map_or(true, |lp| t - lp >= params.replan_interval)
            || path[path_pos + 1..]
                .iter()
                .any(|&c| belief.get(c) != CellState::Free)
            || !goal_cells.iter().any(|&c| is_frontier_cell(&belief, c));
        let mut done = false;
        if need_replan {
            // `min_frontier_size` filters goal candidates, but termination is
            // "no frontiers remain": when every cluster is below the size
            // threshold, fall back to the unfiltered set rather than stopping
            // with unknown space still adjacent to free space.
            let mut frontiers = detect_frontiers(&belief, params.min_frontier_size);
            if frontiers.is_empty() {
                frontiers = detect_frontiers(&belief, 1);
            }
            if frontiers.is_empty() {
                done = true;
            } else {
                let dist = bfs_distances(&belief, pose.cell());
                let idx = |c: Cell| c.y as usize * belief.width() + c.x as usize;
                let costs: Vec<Option<u32>> = frontiers
                    .iter()
                    .map(|f| {
                        let d = dist[idx(f.snapped_centroid())];
                        (d != u32::MAX).then_some(d)
                    })
                    .collect();
                let scores: Vec<f64> = match params.mode {
                    Mode::NearestFrontier => vec![0.0; frontiers.len()],
                    _ => frontiers
                        .iter()
                        .map(|f| {
                            information_gain(f, &ensemble, &belief, sensor, sensor.n_primary)
                        })
                        .collect(),
                };
                let lambda = match params.mode {
                    Mode::NearestFrontier => 1.0,
                    _ => params.lambda,
                };
                match select_frontier(&frontiers, &scores, &costs, lambda) {
                    None => done = true,
                    Some(fi) => {
                        let goal = frontiers[fi].snapped_centroid();
                        match plan_path(&belief, pose.cell(), goal) {
                            Some(p) => {
                                path = p;
                                path_pos = 0;
                                active_frontier = fi as i64;
                                last_plan = Some(t);
                                goal_cells = frontiers[fi].cells.clone();
                            }
                            None => done = true,
                        }
                    }
                }
            }
        }

        if params.snapshot_interval > 0 && t % params.snapshot_interval == 0 {
            if let Some(dir) = &params.snapshot_dir {
                let overlays = crate::render::Overlays {
                    carved: Some(&carved),
                    evidence: Some(&evidence),
                    path: Some(&path[path_pos..]),
                    robot: Some(pose),
                };
                crate::render::render_to_png(
                    &belief,
                    &overlays,
                    dir.join(format!("snapshot_{t:05}.png")),
                )?;
            }
        }

        records.push(TraceRecord {
            t,
            pose,
            coverage: cov,
            iou,
            frontier_id: if done { -1 } else { active_frontier },
            path_len,
        });
        if done || t == params.steps {
            break;
        }

        // Move one cell.
        if path_pos + 1 < path.len() {
            path_pos += 1;
            let next = path[path_pos];
            if gt.get(next) == CellState::Occupied {
                return Err(ExploreError::Collision(next, t));
            }
            pose = Pose::at_cell(next);
            path_len += 1;
        }
    }

    Ok(ExplorationTrace {
        mode: params.mode,
        records,
        final_belief: belief,
        final_evidence: evidence,
        carved,
        predicted_maps,
    })
}
