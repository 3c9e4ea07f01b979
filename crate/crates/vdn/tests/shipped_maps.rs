//! The maps shipped under `maps/` must parse, validate, and behave: correct
//! task kind, expected item inventory, and single-width corridors where the
//! variant name promises them.

use std::path::PathBuf;
use std::sync::Arc;

use vdn::gridworld::{load_map_file, EnvState, Mode, Task, TASK_VARIANTS};

fn maps_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../maps")
}

#[test]
fn all_seven_variants_load_and_reset() {
    for name in TASK_VARIANTS {
        let map = load_map_file(&maps_dir().join(format!("{name}.map")))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        let expected = match name.split('_').next().unwrap() {
            "switch" => Task::Switch,
            "fetch" => Task::Fetch,
            _ => Task::Checkers,
        };
        assert_eq!(map.task, expected, "{name}");
        // Every map must survive a few hundred seeded steps from reset.
        let map = Arc::new(map);
        let (mut env, _) = EnvState::reset(Arc::clone(&map), 1, Mode::Train);
        use rand::Rng;
        let mut rng = vdn::util::seeded_rng(42, 0);
        for _ in 0..300 {
            let a = [
                vdn::gridworld::Action::from_index(rng.gen_range(0..8)),
                vdn::gridworld::Action::from_index(rng.gen_range(0..8)),
            ];
            env.step(a).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn switch_and_fetch_share_their_geometry() {
    for geom in ["open", "1corridor", "2corridor"] {
        let s = load_map_file(&maps_dir().join(format!("switch_{geom}.map"))).unwrap();
        let f = load_map_file(&maps_dir().join(format!("fetch_{geom}.map"))).unwrap();
        assert_eq!((s.width, s.height), (f.width, f.height), "{geom}");
        assert_eq!(s.cells, f.cells, "{geom}: wall layout must match");
    }
}

#[test]
fn corridor_counts_match_names() {
    // A corridor is a passable column through the dividing wall block. Count
    // interior rows where the center column x=7 is floor.
    for (name, want) in [("switch_1corridor", 1), ("switch_2corridor", 2), ("fetch_1corridor", 1), ("fetch_2corridor", 2)] {
        let map = load_map_file(&maps_dir().join(format!("{name}.map"))).unwrap();
        let open_rows = (1..map.height as i32 - 1)
            .filter(|&y| map.is_floor((7, y)))
            .count();
        assert_eq!(open_rows, want, "{name}");
    }
}

#[test]
fn checkers_has_a_lemon_wall_between_players_and_apples() {
    let map = load_map_file(&maps_dir().join("checkers.map")).unwrap();
    assert!(!map.apples.is_empty() && !map.lemons.is_empty());
    let max_spawn_x = map.spawns.iter().flatten().map(|c| c.0).max().unwrap();
    let min_apple_x = map.apples.iter().map(|c| c.0).min().unwrap();
    let lemon_x: Vec<i32> = map.lemons.iter().map(|c| c.0).collect();
    // Some lemon column strictly separates all spawns from all apples, and
    // that column is fully covered by lemons over the interior rows.
    let wall_x = lemon_x[0];
    assert!(lemon_x.iter().all(|&x| x == wall_x), "lemon wall is one column");
    assert!(max_spawn_x < wall_x && wall_x < min_apple_x);
    let interior_rows = (1..map.height as i32 - 1).count();
    assert_eq!(map.lemons.len(), interior_rows, "wall spans every interior row");
}
