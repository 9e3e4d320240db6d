//! Floorplans shipped with the crate.

use super::{MapError, MapSpec};

pub const MAP1: &str = include_str!("../../assets/maps/map1.map");
pub const MAP2: &str = include_str!("../../assets/maps/map2.map");
pub const MAP3: &str = include_str!("../../assets/maps/map3.map");
pub const MAP4: &str = include_str!("../../assets/maps/map4.map");
pub const EMPTY_ROOM: &str = include_str!("../../assets/maps/empty_room.map");
pub const CORRIDOR: &str = include_str!("../../assets/maps/corridor.map");

pub const NAMES: [&str; 6] = ["map1", "map2", "map3", "map4", "empty_room", "corridor"];

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "map1" => MAP1,
        "map2" => MAP2,
        "map3" => MAP3,
        "map4" => MAP4,
        "empty_room" => EMPTY_ROOM,
        "corridor" => CORRIDOR,
        _ => return None,
    })
}

/// Parses a bundled map by name.
pub fn load(name: &str) -> Result<MapSpec, MapError> {
    let text = source(name).ok_or_else(|| MapError::Invalid(format!("no bundled map `{name}`")))?;
    MapSpec::parse(name, text)
}
