use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use super::{EnvState, GoalEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// The default G-shaped maze shipped with the crate.
pub const DEFAULT_MAZE: &str = include_str!("../../data/gmaze_v1.txt");
/// A wall-free square arena with the same dynamics, used for sanity checks.
pub const OPEN_MAZE: &str = include_str!("../../data/open_v1.txt");

/// Gap left between a pinned point and the wall face it hit, so positions stay
/// strictly inside free cells.
const FACE_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Wall,
    Free,
}

/// Immutable maze description.
///
/// Cell `(col, row)` is centered at `(col * cell_size, row * cell_size)`, with
/// `row` counted upwards from the bottom line of the ASCII map.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeSpec {
    name: String,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    start_cells: Vec<(usize, usize)>,
    goal_cell: (usize, usize),
    pub cell_size: f64,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub action_bound: f64,
    pub dt: f64,
    pub v_max: f64,
    /// Linear velocity damping in 1/s; zero gives a pure double integrator.
    pub drag: f64,
    pub horizon: usize,
}

impl MazeSpec {
    pub fn default_maze() -> Self {
        Self::parse(DEFAULT_MAZE).expect("bundled maze is valid")
    }

    pub fn open_arena() -> Self {
        Self::parse(OPEN_MAZE).expect("bundled arena is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Resolves `gmaze`/`open` to the bundled maps, anything else as a file path.
    pub fn from_name_or_path(name: &str) -> Result<Self> {
        match name {
            "gmaze" | "gmaze-v1" | "default" => Ok(Self::default_maze()),
            "open" | "open-v1" => Ok(Self::open_arena()),
            path => Self::load(Path::new(path)),
        }
    }

    /// Parses a header line of `key=value` pairs followed by the ASCII map.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Maze("empty maze file".into()))?;

        let mut name = String::from("maze");
        let mut cell_size = None;
        let mut goal_radius = None;
        let mut dt = None;
        let mut v_max = None;
        let mut action_bound = None;
        let mut horizon = None;
        let mut drag = 0.0;
        for pair in header.split_whitespace() {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Maze(format!("header entry {pair:?} is not key=value")))?;
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v > 0.0)
                    .ok_or_else(|| Error::Maze(format!("{key} must be a positive number, got {value:?}")))
            };
            match key {
                "name" => name = value.to_string(),
                "cell_size" => cell_size = Some(num()?),
                "goal_radius" => goal_radius = Some(num()?),
                "dt" => dt = Some(num()?),
                "v_max" => v_max = Some(num()?),
                "action_bound" => action_bound = Some(num()?),
                "drag" => {
                    drag = value
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && *v >= 0.0)
                        .ok_or_else(|| Error::Maze(format!("drag must be a non-negative number, got {value:?}")))?
                }
                "horizon" => {
                    horizon = Some(
                        value
                            .parse::<usize>()
                            .ok()
                            .filter(|&h| h > 0)
                            .ok_or_else(|| Error::Maze(format!("horizon must be a positive integer, got {value:?}")))?,
                    )
                }
                other => return Err(Error::Maze(format!("unknown header key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::Maze(format!("header is missing {k}"));

        let rows: Vec<&str> = lines.map(str::trim_end).collect();
        if rows.is_empty() {
            return Err(Error::Maze("no map rows".into()));
        }
        let width = rows[0].chars().count();
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::Maze("map is not rectangular".into()));
        }
        let height = rows.len();
        let mut cells = vec![Cell::Wall; width * height];
        let mut goal = Vec::new();
        let mut start_cells = Vec::new();
        for (k, line) in rows.iter().enumerate() {
            let row = height - 1 - k;
            for (col, ch) in line.chars().enumerate() {
                cells[row * width + col] = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'G' => {
                        goal.push((col, row));
                        Cell::Free
                    }
                    'S' => {
                        start_cells.push((col, row));
                        Cell::Free
                    }
                    other => return Err(Error::Maze(format!("unexpected map character {other:?}"))),
                };
            }
        }
        if goal.len() != 1 {
            return Err(Error::Maze(format!("expected exactly one 'G', found {}", goal.len())));
        }
        let goal_cell = goal[0];
        let cell_size = cell_size.ok_or_else(|| missing("cell_size"))?;
        let spec = Self {
            name,
            width,
            height,
            cells,
            start_cells,
            goal_cell,
            cell_size,
            goal_center: [goal_cell.0 as f64 * cell_size, goal_cell.1 as f64 * cell_size],
            goal_radius: goal_radius.ok_or_else(|| missing("goal_radius"))?,
            action_bound: action_bound.ok_or_else(|| missing("action_bound"))?,
            dt: dt.ok_or_else(|| missing("dt"))?,
            v_max: v_max.ok_or_else(|| missing("v_max"))?,
            drag,
            horizon: horizon.ok_or_else(|| missing("horizon"))?,
        };
        spec.check_reachability()?;
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal_cell
    }

    pub fn start_cells(&self) -> &[(usize, usize)] {
        &self.start_cells
    }

    pub fn is_free_cell(&self, col: isize, row: isize) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.cells[row as usize * self.width + col as usize] == Cell::Free
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|row| (0..self.width).map(move |col| (col, row)))
            .filter(|&(c, r)| self.is_free_cell(c as isize, r as isize))
            .collect()
    }

    /// `[x_min, x_max, y_min, y_max]`
    pub fn bounds(&self) -> [f64; 4] {
        let h = 0.5 * self.cell_size;
        [
            -h,
            (self.width as f64 - 0.5) * self.cell_size,
            -h,
            (self.height as f64 - 0.5) * self.cell_size,
        ]
    }

    /// Index of the cell whose (half-open) extent contains `coord`.
    pub fn cell_index(&self, coord: f64) -> isize {
        ((coord / self.cell_size) + 0.5).floor() as isize
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [col as f64 * self.cell_size, row as f64 * self.cell_size]
    }

    /// True when the point lies in the closure of some free cell.
    pub fn position_feasible(&self, x: f64, y: f64) -> bool {
        if !(x.is_finite() && y.is_finite()) {
            return false;
        }
        let [x0, x1, y0, y1] = self.bounds();
        if x < x0 || x > x1 || y < y0 || y > y1 {
            return false;
        }
        self.touching_cells(x, y)
            .into_iter()
            .any(|(c, r)| self.is_free_cell(c, r))
    }

    /// Cells whose closed square contains the point (one to four of them).
    fn touching_cells(&self, x: f64, y: f64) -> Vec<(isize, isize)> {
        let axis = |v: f64| {
            let i = self.cell_index(v);
            let face = (i as f64 - 0.5) * self.cell_size;
            if v == face {
                vec![i - 1, i]
            } else {
                vec![i]
            }
        };
        let cols = axis(x);
        let rows = axis(y);
        cols.iter()
            .flat_map(|&c| rows.iter().map(move |&r| (c, r)))
            .collect()
    }

    /// Breadth-first search over 4-connected free cells from the goal cell.
    pub fn unreachable_cells(&self) -> Vec<(usize, usize)> {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([self.goal_cell]);
        seen[self.goal_cell.1 * self.width + self.goal_cell.0] = true;
        while let Some((c, r)) = queue.pop_front() {
            for (dc, dr) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (nc, nr) = (c as isize + dc, r as isize + dr);
                if self.is_free_cell(nc, nr) {
                    let idx = nr as usize * self.width + nc as usize;
                    if !seen[idx] {
                        seen[idx] = true;
                        queue.push_back((nc as usize, nr as usize));
                    }
                }
            }
        }
        self.free_cells()
            .into_iter()
            .filter(|&(c, r)| !seen[r * self.width + c])
            .collect()
    }

    fn check_reachability(&self) -> Result<()> {
        let unreachable = self.unreachable_cells();
        if unreachable.is_empty() {
            Ok(())
        } else {
            Err(Error::Maze(format!(
                "free cells {unreachable:?} cannot reach the goal cell"
            )))
        }
    }
}

impl fmt::Display for MazeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "name={} cell_size={} goal_radius={} dt={} v_max={} action_bound={} drag={} horizon={}",
            self.name,
            self.cell_size,
            self.goal_radius,
            self.dt,
            self.v_max,
            self.action_bound,
            self.drag,
            self.horizon
        )?;
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                let ch = if (col, row) == self.goal_cell {
                    'G'
                } else if self.start_cells.contains(&(col, row)) {
                    'S'
                } else if self.is_free_cell(col as isize, row as isize) {
                    '.'
                } else {
                    '#'
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Double-integrator point mass moving through a [`MazeSpec`].
///
/// Actions are accelerations, clipped per axis to `action_bound`, minus
/// `drag * v`. Velocity is integrated first and its norm capped at `v_max`; the position update is then
/// applied one axis at a time, and an axis that would enter a wall stops at the
/// wall face with its velocity component zeroed.
#[derive(Debug, Clone)]
pub struct PointMassMaze {
    spec: Arc<MazeSpec>,
    horizon: usize,
    state: EnvState,
    t: usize,
    active: bool,
}

impl PointMassMaze {
    pub fn new(spec: MazeSpec) -> Self {
        Self::shared(Arc::new(spec))
    }

    pub fn shared(spec: Arc<MazeSpec>) -> Self {
        let goal = EnvState::at_rest(spec.goal_center[0], spec.goal_center[1]);
        Self {
            horizon: spec.horizon,
            spec,
            state: goal,
            t: 0,
            active: false,
        }
    }

    /// Overrides the map's horizon.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn spec(&self) -> &MazeSpec {
        &self.spec
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    /// Moves `pos[axis]` by `delta`, stopping at the first blocked cell face.
    /// Returns whether the move was blocked.
    fn move_axis(&self, pos: &mut [f64; 2], axis: usize, delta: f64) -> bool {
        if delta == 0.0 {
            return false;
        }
        let spec = &*self.spec;
        let other = 1 - axis;
        let other_idx = spec.cell_index(pos[other]);
        let target = pos[axis] + delta;
        let step: isize = if delta > 0.0 { 1 } else { -1 };
        let mut idx = spec.cell_index(pos[axis]);
        let free = |i: isize| {
            if axis == 0 {
                spec.is_free_cell(i, other_idx)
            } else {
                spec.is_free_cell(other_idx, i)
            }
        };
        if !free(idx) {
            // Sitting exactly on a face: the free side is the one behind us.
            idx -= step;
        }
        let target_idx = spec.cell_index(target);
        while idx != target_idx {
            let next = idx + step;
            if !free(next) {
                let face = (idx as f64 + 0.5 * step as f64) * spec.cell_size;
                pos[axis] = face - step as f64 * FACE_GAP;
                return true;
            }
            idx = next;
        }
        pos[axis] = target;
        false
    }
}

impl GoalEnv for PointMassMaze {
    fn obs_dim(&self) -> usize {
        4
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn goal_state(&self) -> EnvState {
        EnvState::at_rest(self.spec.goal_center[0], self.spec.goal_center[1])
    }

    fn is_feasible(&self, state: &EnvState) -> bool {
        state.vel.iter().all(|v| v.is_finite())
            && state.speed() <= self.spec.v_max * (1.0 + 1e-12)
            && self.spec.position_feasible(state.pos[0], state.pos[1])
    }

    fn is_goal(&self, state: &EnvState) -> bool {
        state.distance_to(self.spec.goal_center) <= self.spec.goal_radius
    }

    /// Position scaled to `[-1, 1]` over the bounding box, velocity by `v_max`.
    fn observe(&self, state: &EnvState) -> Vec<f64> {
        let [x0, x1, y0, y1] = self.spec.bounds();
        let (cx, hx) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
        let (cy, hy) = (0.5 * (y0 + y1), 0.5 * (y1 - y0));
        vec![
            (state.pos[0] - cx) / hx,
            (state.pos[1] - cy) / hy,
            state.vel[0] / self.spec.v_max,
            state.vel[1] / self.spec.v_max,
        ]
    }

    fn transition(&self, state: &EnvState, action: &[f64]) -> Result<EnvState> {
        if action.len() != 2 {
            return Err(Error::Shape {
                context: "maze action",
                expected: 2,
                actual: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("maze action"));
        }
        let spec = &*self.spec;
        let bound = spec.action_bound;
        let mut vel = [0.0; 2];
        for k in 0..2 {
            let accel = action[k].clamp(-bound, bound) - spec.drag * state.vel[k];
            vel[k] = state.vel[k] + accel * spec.dt;
        }
        let speed = vel[0].hypot(vel[1]);
        if speed > spec.v_max {
            let scale = spec.v_max / speed;
            vel[0] *= scale;
            vel[1] *= scale;
        }
        let mut pos = state.pos;
        for axis in 0..2 {
            if self.move_axis(&mut pos, axis, vel[axis] * spec.dt) {
                vel[axis] = 0.0;
            }
        }
        Ok(EnvState { pos, vel })
    }

    fn reset_to(&mut self, state: &EnvState) -> Result<Vec<f64>> {
        if !self.is_feasible(state) {
            return Err(Error::InfeasibleState {
                x: state.pos[0],
                y: state.pos[1],
            });
        }
        self.state = *state;
        self.t = 0;
        self.active = true;
        Ok(self.observe(state))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if !self.active {
            return Err(Error::EpisodeOver);
        }
        let next = self.transition(&self.state, action)?;
        self.state = next;
        self.t += 1;
        let reached = self.is_goal(&next);
        let done = reached || self.t >= self.horizon;
        if done {
            self.active = false;
        }
        Ok(StepOutcome {
            state: next,
            obs: self.observe(&next),
            reward: if reached { 1.0 } else { 0.0 },
            done,
        })
    }

    fn state(&self) -> EnvState {
        self.state
    }

    fn sample_uniform_feasible(&self, n: usize, rng: &mut RngStream) -> Vec<EnvState> {
        let [x0, x1, y0, y1] = self.spec.bounds();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = rng.random_range(x0..x1);
            let y = rng.random_range(y0..y1);
            if self.spec.is_free_cell(self.spec.cell_index(x), self.spec.cell_index(y)) {
                out.push(EnvState::at_rest(x, y));
            }
        }
        out
    }
}
