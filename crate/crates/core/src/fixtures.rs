//! Programs used by tests, benchmarks and the command line.

pub const BOUNDED_LONGEST_PATH: &str = include_str!("../fixtures/bounded_longest_path.dl");
pub const LIMITED_PATH: &str = include_str!("../fixtures/limited_path.dl");
pub const LIMITED_PATH_PUSHED: &str = include_str!("../fixtures/limited_path_pushed.dl");
pub const MULTI_MODEL_COUNTS: &str = include_str!("../fixtures/multi_model_counts.dl");
pub const NONPUSHABLE_MAX: &str = include_str!("../fixtures/nonpushable_max.dl");
pub const PART_EXPLOSION: &str = include_str!("../fixtures/part_explosion.dl");
pub const PART_EXPLOSION_UNGUARDED: &str = include_str!("../fixtures/part_explosion_unguarded.dl");
pub const PARTS_TOTAL: &str = include_str!("../fixtures/parts_total.dl");
pub const PARTY_COUNT: &str = include_str!("../fixtures/party_count.dl");
pub const PARTY_MCOUNT: &str = include_str!("../fixtures/party_mcount.dl");
pub const PARTY_VARIANT: &str = include_str!("../fixtures/party_variant.dl");
pub const SHORTEST_PATH: &str = include_str!("../fixtures/shortest_path.dl");
pub const SHORTEST_PATH_PUSHED: &str = include_str!("../fixtures/shortest_path_pushed.dl");
pub const SPATH_MMIN: &str = include_str!("../fixtures/spath_mmin.dl");
pub const SPATH_PREM: &str = include_str!("../fixtures/spath_prem.dl");
pub const SPATH_STRATIFIED: &str = include_str!("../fixtures/spath_stratified.dl");

/// Three arcs: a to b (1), b to c (1), a to c (5).
pub const THREE_NODE_FACTS: &str = include_str!("../fixtures/three_node.facts");

/// Every fixture program with its file stem.
pub const ALL: &[(&str, &str)] = &[
    ("bounded_longest_path", BOUNDED_LONGEST_PATH),
    ("limited_path", LIMITED_PATH),
    ("limited_path_pushed", LIMITED_PATH_PUSHED),
    ("multi_model_counts", MULTI_MODEL_COUNTS),
    ("nonpushable_max", NONPUSHABLE_MAX),
    ("part_explosion", PART_EXPLOSION),
    ("part_explosion_unguarded", PART_EXPLOSION_UNGUARDED),
    ("parts_total", PARTS_TOTAL),
    ("party_count", PARTY_COUNT),
    ("party_mcount", PARTY_MCOUNT),
    ("party_variant", PARTY_VARIANT),
    ("shortest_path", SHORTEST_PATH),
    ("shortest_path_pushed", SHORTEST_PATH_PUSHED),
    ("spath_mmin", SPATH_MMIN),
    ("spath_prem", SPATH_PREM),
    ("spath_stratified", SPATH_STRATIFIED),
];
