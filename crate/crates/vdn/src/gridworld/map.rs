use super::{Cell, Coord};
use crate::error::{Result, VdnError};

/// Benchmark task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Switch,
    Fetch,
    Checkers,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Switch => "switch",
            Task::Fetch => "fetch",
            Task::Checkers => "checkers",
        }
    }
}

/// Parsed, validated static map: walls, spawn cells, and task-specific cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>, // row-major, y*width + x
    pub spawns: [Vec<Coord>; 2],
    pub goals: [Option<Coord>; 2], // Switch
    pub pickup: Option<Coord>,     // Fetch
    pub dropoff: Option<Coord>,    // Fetch
    pub apples: Vec<Coord>,        // Checkers
    pub lemons: Vec<Coord>,        // Checkers
    pub task: Task,
}

impl GridMap {
    pub fn in_bounds(&self, c: Coord) -> bool {
        c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < self.width && (c.1 as usize) < self.height
    }

    pub fn cell(&self, c: Coord) -> Cell {
        if self.in_bounds(c) {
            self.cells[c.1 as usize * self.width + c.0 as usize]
        } else {
            Cell::Wall
        }
    }

    pub fn is_floor(&self, c: Coord) -> bool {
        self.in_bounds(c) && self.cell(c) == Cell::Floor
    }

    /// Regenerates the ASCII document (header + glyph grid). Spawn markers
    /// take precedence where a cell carries several roles.
    pub fn to_text(&self) -> String {
        let mut out = format!("task: {}\n", self.task.name());
        for y in 0..self.height {
            for x in 0..self.width {
                let c = (x as i32, y as i32);
                let glyph = if self.cell(c) == Cell::Wall {
                    '#'
                } else if self.spawns[0].contains(&c) {
                    '1'
                } else if self.spawns[1].contains(&c) {
                    '2'
                } else if self.goals[0] == Some(c) {
                    'a'
                } else if self.goals[1] == Some(c) {
                    'b'
                } else if self.pickup == Some(c) {
                    'P'
                } else if self.dropoff == Some(c) {
                    'D'
                } else if self.apples.contains(&c) {
                    'A'
                } else if self.lemons.contains(&c) {
                    'L'
                } else {
                    '.'
                };
                out.push(glyph);
            }
            out.push('\n');
        }
        out
    }
}

/// The seven benchmark task variants; `<name>.map` is the map file stem.
pub const TASK_VARIANTS: [&str; 7] = [
    "switch_open",
    "switch_1corridor",
    "switch_2corridor",
    "fetch_open",
    "fetch_1corridor",
    "fetch_2corridor",
    "checkers",
];

/// Reads and parses a map file from disk.
pub fn load_map_file(path: &std::path::Path) -> Result<GridMap> {
    let text = std::fs::read_to_string(path).map_err(|e| VdnError::io(path, e))?;
    load_map(&text)
}

/// Parses the ASCII map format:
///
/// ```text
/// task: switch|fetch|checkers
/// <one glyph per cell per line>
/// ```
///
/// Glyphs: `#` wall, `.` floor, `1`/`2` agent spawns, `a`/`b` per-agent goals
/// (Switch), `P` pickup / `D` dropoff (Fetch), `A` apple / `L` lemon
/// (Checkers). Errors carry 1-based line/column positions.
pub fn load_map(text: &str) -> Result<GridMap> {
    let mut lines = text.lines().enumerate();
    let (header_line, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| VdnError::parse(1, 1, "empty map document"))?;
    let header = header.trim();
    let task = match header.strip_prefix("task:").map(str::trim) {
        Some("switch") => Task::Switch,
        Some("fetch") => Task::Fetch,
        Some("checkers") => Task::Checkers,
        Some(other) => {
            return Err(VdnError::parse(
                header_line + 1,
                1,
                format!("unknown task '{other}' (expected switch, fetch or checkers)"),
            ))
        }
        None => {
            return Err(VdnError::parse(
                header_line + 1,
                1,
                "expected header 'task: switch|fetch|checkers'",
            ))
        }
    };

    let mut rows: Vec<(usize, &str)> = Vec::new();
    for (idx, line) in lines {
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        rows.push((idx, trimmed));
    }
    if rows.is_empty() {
        return Err(VdnError::parse(header_line + 2, 1, "map has no grid rows"));
    }

    let width = rows[0].1.chars().count();
    let height = rows.len();
    let mut map = GridMap {
        width,
        height,
        cells: vec![Cell::Floor; width * height],
        spawns: [Vec::new(), Vec::new()],
        goals: [None, None],
        pickup: None,
        dropoff: None,
        apples: Vec::new(),
        lemons: Vec::new(),
        task,
    };

    for (y, &(line_idx, row)) in rows.iter().enumerate() {
        let count = row.chars().count();
        if count != width {
            return Err(VdnError::parse(
                line_idx + 1,
                count.min(width) + 1,
                format!("row is {count} cells wide, expected {width}"),
            ));
        }
        for (x, glyph) in row.chars().enumerate() {
            let here = (x as i32, y as i32);
            let at = |msg: String| VdnError::parse(line_idx + 1, x + 1, msg);
            let wrong_task =
                |g: char| at(format!("glyph '{g}' not valid for task {}", task.name()));
            match glyph {
                '#' => map.cells[y * width + x] = Cell::Wall,
                '.' => {}
                '1' => map.spawns[0].push(here),
                '2' => map.spawns[1].push(here),
                'a' | 'b' => {
                    if task != Task::Switch {
                        return Err(wrong_task(glyph));
                    }
                    let agent = if glyph == 'a' { 0 } else { 1 };
                    if map.goals[agent].is_some() {
                        return Err(at(format!("duplicate goal for agent {}", agent + 1)));
                    }
                    map.goals[agent] = Some(here);
                }
                'P' | 'D' => {
                    if task != Task::Fetch {
                        return Err(wrong_task(glyph));
                    }
                    let slot = if glyph == 'P' { &mut map.pickup } else { &mut map.dropoff };
                    if slot.is_some() {
                        let what = if glyph == 'P' { "pickup" } else { "dropoff" };
                        return Err(at(format!("duplicate {what} cell")));
                    }
                    *slot = Some(here);
                }
                'A' | 'L' => {
                    if task != Task::Checkers {
                        return Err(wrong_task(glyph));
                    }
                    if glyph == 'A' {
                        map.apples.push(here);
                    } else {
                        map.lemons.push(here);
                    }
                }
                other => return Err(at(format!("unknown glyph '{other}'"))),
            }
        }
    }

    validate(&map).map_err(|msg| VdnError::parse(header_line + 1, 1, msg))?;
    Ok(map)
}

fn validate(map: &GridMap) -> std::result::Result<(), String> {
    for agent in 0..2 {
        if map.spawns[agent].is_empty() {
            return Err(format!("missing spawn for agent {}", agent + 1));
        }
    }
    // Agent 1 draws its spawn first; agent 2 needs a distinct cell left over
    // no matter which cell agent 1 took.
    if map.spawns[1].len() == 1 && map.spawns[0].contains(&map.spawns[1][0]) {
        return Err("agents share the only spawn cell".to_string());
    }
    match map.task {
        Task::Switch => {
            for agent in 0..2 {
                if map.goals[agent].is_none() {
                    return Err(format!("missing goal for agent {}", agent + 1));
                }
            }
        }
        Task::Fetch => {
            if map.pickup.is_none() {
                return Err("missing pickup cell".to_string());
            }
            if map.dropoff.is_none() {
                return Err("missing dropoff cell".to_string());
            }
        }
        Task::Checkers => {
            if map.apples.is_empty() {
                return Err("checkers map needs at least one apple".to_string());
            }
        }
    }
    Ok(())
}
