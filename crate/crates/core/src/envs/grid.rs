//! Deterministic grid worlds: four actions (N, S, E, W), walls and borders
//! block movement, the goal is absorbing and pays 1 on entry.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::MdpModel;
use crate::error::{Error, Result};

/// Layout of the two-room world: two 10×5 rooms joined by one doorway.
pub const TWO_ROOM_MAP: &str = include_str!("../../data/two_room.map");

/// Row/column offsets for N, S, E, W.
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, 1), (0, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    Goal,
}

/// Cell geometry of a grid MDP, kept for rendering value heat maps.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    /// State index of each non-wall cell, row-major.
    pub state_of_cell: Vec<Option<usize>>,
    /// `(row, col)` of each state.
    pub cell_of_state: Vec<(usize, usize)>,
    pub goal: usize,
}

impl GridLayout {
    pub fn n_free(&self) -> usize {
        self.cell_of_state.len()
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(match self.cells[r * self.width + c] {
                    Cell::Wall => '#',
                    Cell::Free => '.',
                    Cell::Goal => 'G',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// `width × height` grid with wall cells given as `(row, col)`.
pub fn grid_world(
    width: usize,
    height: usize,
    walls: &[(usize, usize)],
    goal: (usize, usize),
    gamma: f64,
) -> Result<MdpModel> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("grid must have positive width and height"));
    }
    let mut cells = vec![Cell::Free; width * height];
    for &(r, c) in walls {
        if r >= height || c >= width {
            return Err(Error::invalid(format!("wall ({r}, {c}) outside the grid")));
        }
        cells[r * width + c] = Cell::Wall;
    }
    if goal.0 >= height || goal.1 >= width {
        return Err(Error::invalid("goal outside the grid"));
    }
    if cells[goal.0 * width + goal.1] == Cell::Wall {
        return Err(Error::invalid("goal lies inside a wall"));
    }
    cells[goal.0 * width + goal.1] = Cell::Goal;
    build(width, height, cells, gamma)
}

/// Parse an ASCII map (`#` wall, `.` free, `G` goal; one goal exactly).
pub fn grid_from_ascii(map: &str, gamma: f64) -> Result<MdpModel> {
    let rows: Vec<&str> = map
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect();
    if rows.is_empty() {
        return Err(Error::Parse("empty grid map".into()));
    }
    let width = rows[0].chars().count();
    let mut cells = Vec::with_capacity(width * rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::Parse(format!(
                "map row {} has a different width",
                i + 1
            )));
        }
        for ch in row.chars() {
            cells.push(match ch {
                '#' => Cell::Wall,
                '.' => Cell::Free,
                'G' => Cell::Goal,
                other => {
                    return Err(Error::Parse(format!(
                        "unknown map symbol {other:?} on row {}",
                        i + 1
                    )))
                }
            });
        }
    }
    if cells.iter().filter(|&&c| c == Cell::Goal).count() != 1 {
        return Err(Error::Parse("map must contain exactly one goal".into()));
    }
    build(width, rows.len(), cells, gamma)
}

pub fn two_room_world(gamma: f64) -> Result<MdpModel> {
    grid_from_ascii(TWO_ROOM_MAP, gamma)
}

fn build(width: usize, height: usize, cells: Vec<Cell>, gamma: f64) -> Result<MdpModel> {
    let mut state_of_cell = vec![None; cells.len()];
    let mut cell_of_state = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        if *cell != Cell::Wall {
            state_of_cell[i] = Some(cell_of_state.len());
            cell_of_state.push((i / width, i % width));
        }
    }
    let n = cell_of_state.len();
    let goal = cells
        .iter()
        .position(|&c| c == Cell::Goal)
        .and_then(|i| state_of_cell[i])
        .ok_or_else(|| Error::invalid("grid has no goal"))?;

    let neighbour = |s: usize, a: usize| -> usize {
        let (r, c) = cell_of_state[s];
        let (dr, dc) = MOVES[a];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
            return s;
        }
        state_of_cell[nr as usize * width + nc as usize].unwrap_or(s)
    };

    check_connected(n, |s| (0..4).map(move |a| neighbour(s, a)))?;

    let mut transitions = Vec::with_capacity(4);
    let mut rewards = Vec::with_capacity(4);
    for a in 0..4 {
        let mut p = DMatrix::zeros(n, n);
        let mut r = DMatrix::zeros(n, n);
        for s in 0..n {
            if s == goal {
                p[(s, s)] = 1.0;
                continue;
            }
            let t = neighbour(s, a);
            p[(s, t)] = 1.0;
            if t == goal {
                r[(s, t)] = 1.0;
            }
        }
        transitions.push(p);
        rewards.push(r);
    }
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    let layout = GridLayout {
        width,
        height,
        cells,
        state_of_cell,
        cell_of_state,
        goal,
    };
    Ok(MdpModel::new(transitions, rewards, gamma, terminal)?.with_layout(layout))
}

/// Connected components by breadth-first search; errors when more than one.
pub(crate) fn check_connected<F, I>(n: usize, neighbours: F) -> Result<()>
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let components = components(n, neighbours);
    if components.len() > 1 {
        return Err(Error::Disconnected { components });
    }
    Ok(())
}

pub(crate) fn components<F, I>(n: usize, neighbours: F) -> Vec<Vec<usize>>
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for t in neighbours(s) {
                if label[t] == usize::MAX {
                    label[t] = id;
                    members.push(t);
                    queue.push_back(t);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{policy_evaluation_exact, Policy};
    use approx::assert_relative_eq;

    #[test]
    fn one_by_two_east() {
        let m = grid_world(2, 1, &[], (0, 1), 0.9).unwrap();
        let v = policy_evaluation_exact(&m, &Policy::constant(2, 2)).unwrap();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn enclosed_cell_is_rejected() {
        // (1,1) walled in on all four sides.
        let walls = [(0, 1), (1, 0), (1, 2), (2, 1)];
        let err = grid_world(3, 3, &walls, (0, 0), 0.9).unwrap_err();
        match err {
            Error::Disconnected { components } => assert!(components.iter().any(|c| c.len() == 1)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn goal_in_wall_is_rejected() {
        assert!(grid_world(3, 3, &[(0, 0)], (0, 0), 0.9).is_err());
    }

    #[test]
    fn ten_by_ten() {
        let m = grid_world(10, 10, &[], (0, 0), 0.9).unwrap();
        assert_eq!(m.n_states(), 100);
        assert_eq!(m.n_actions(), 4);
        for a in 0..4 {
            for s in 0..100 {
                assert_relative_eq!(m.transition(a).row(s).sum(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(m.is_terminal(0));
    }

    #[test]
    fn two_rooms() {
        let m = two_room_world(0.9).unwrap();
        assert_eq!(m.n_states(), 101);
        let layout = m.layout().unwrap();
        assert_eq!(
            layout.to_ascii(),
            TWO_ROOM_MAP.trim_end().to_string() + "\n"
        );
        // Closing the doorway splits the rooms.
        let closed: String = TWO_ROOM_MAP
            .lines()
            .map(|l| {
                let mut chars: Vec<char> = l.chars().collect();
                if chars.len() > 5 {
                    chars[5] = '#';
                }
                chars.into_iter().collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n");
        match grid_from_ascii(&closed, 0.9).unwrap_err() {
            Error::Disconnected { components } => assert_eq!(components.len(), 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ascii_errors() {
        assert!(grid_from_ascii("..\n..", 0.9).is_err());
        assert!(grid_from_ascii("G.\nG.", 0.9).is_err());
        assert!(grid_from_ascii("G.\n.x", 0.9).is_err());
        assert!(grid_from_ascii("G.\n...", 0.9).is_err());
    }
}
