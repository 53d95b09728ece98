//! Walker Delta constellation synthesis.
//!
//! Builds topology snapshots: satellite geodetic positions at a given time,
//! the 4-neighbor ISL grid graph with distance-based propagation delays, and
//! named geographic regions used for flow selection and edge avoidance.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius, km (spherical model).
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Earth gravitational parameter, km^3/s^2.
pub const MU_EARTH: f64 = 398600.4418;
/// Speed of light, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299792.458;
/// Sidereal day, seconds (one full Earth rotation).
pub const SIDEREAL_DAY_S: f64 = 86164.0905;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("planes and sats_per_plane must both be >= 1 (got {planes}x{sats_per_plane})")]
    EmptyShell { planes: usize, sats_per_plane: usize },
    #[error("altitude_km must be > 0 (got {0})")]
    Altitude(f64),
    #[error("inclination_deg must be in (0, 180] (got {0})")]
    Inclination(f64),
    #[error("failed to read constellation config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse constellation config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Error)]
#[error("unknown region {0:?}")]
pub struct UnknownRegion(pub String);

/// Walker Delta shell parameters.
///
/// `planes * sats_per_plane` satellites on circular orbits sharing one
/// altitude and inclination, with plane ascending nodes evenly spaced and
/// in-plane slots evenly phased. `phasing_factor` is the Walker F parameter
/// shifting slot phase between adjacent planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerConfig {
    pub planes: usize,
    pub sats_per_plane: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub phasing_factor: u32,
    pub earth_rotation: bool,
    pub epoch_offset_s: f64,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self {
            planes: 20,
            sats_per_plane: 20,
            altitude_km: 550.0,
            inclination_deg: 53.0,
            phasing_factor: 1,
            earth_rotation: true,
            epoch_offset_s: 0.0,
        }
    }
}

impl WalkerConfig {
    pub fn node_count(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn semi_major_axis_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    /// Circular orbital period, seconds.
    pub fn orbital_period_s(&self) -> f64 {
        let a = self.semi_major_axis_km();
        2.0 * PI * (a * a * a / MU_EARTH).sqrt()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.planes < 1 || self.sats_per_plane < 1 {
            return Err(ConfigError::EmptyShell {
                planes: self.planes,
                sats_per_plane: self.sats_per_plane,
            });
        }
        if !(self.altitude_km > 0.0) {
            return Err(ConfigError::Altitude(self.altitude_km));
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg <= 180.0) {
            return Err(ConfigError::Inclination(self.inclination_deg));
        }
        Ok(())
    }

    /// Load from a TOML file; missing keys fall back to defaults.
    pub fn from_toml_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: WalkerConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One satellite's state at the snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatelliteState {
    pub node_id: usize,
    pub plane: usize,
    pub slot: usize,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_km: f64,
    pub ecef_position_km: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    IntraPlane,
    InterPlane,
}

/// Undirected ISL with propagation delay. `u < v` always.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IslEdge {
    pub u: usize,
    pub v: usize,
    pub delay_ms: f64,
    pub capacity: f64,
    pub kind: EdgeKind,
}

/// The constellation graph at one instant: node states plus the grid ISL
/// edge set (slot±1 intra-plane, same slot in plane±1, torus wrap).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologySnapshot {
    pub time_s: f64,
    pub config: WalkerConfig,
    pub nodes: Vec<SatelliteState>,
    pub edges: Vec<IslEdge>,
    /// Per node: (neighbor id, edge index) sorted by neighbor id.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl TopologySnapshot {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Index of the undirected edge between `a` and `b`, if present.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        if a >= self.adjacency.len() {
            return None;
        }
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, e)| *e)
    }

    /// Constellation-wide minimum single-hop delay, exported for physical
    /// admissibility diagnostics.
    pub fn min_edge_delay_ms(&self) -> Option<f64> {
        self.edges
            .iter()
            .map(|e| e.delay_ms)
            .min_by(|a, b| a.partial_cmp(b).expect("finite delays"))
    }

    /// Build a snapshot from explicit parts. Used for synthetic graphs in
    /// tests and oracles; `build_snapshot` is the constellation path.
    pub fn from_parts(config: WalkerConfig, time_s: f64, nodes: Vec<SatelliteState>, edges: Vec<(usize, usize, f64)>) -> Self {
        let n = nodes.len();
        let mut dedup: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut list = Vec::new();
        for (a, b, delay_ms) in edges {
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if u == v || !dedup.insert((u, v)) {
                continue;
            }
            list.push(IslEdge {
                u,
                v,
                delay_ms,
                capacity: 1.0,
                kind: EdgeKind::IntraPlane,
            });
        }
        let adjacency = build_adjacency(n, &list);
        Self {
            time_s,
            config,
            nodes,
            edges: list,
            adjacency,
        }
    }
}

fn build_adjacency(n: usize, edges: &[IslEdge]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (idx, e) in edges.iter().enumerate() {
        adj[e.u].push((e.v, idx));
        adj[e.v].push((e.u, idx));
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

fn normalize_lon_deg(mut lon: f64) -> f64 {
    lon %= 360.0;
    if lon >= 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    lon
}

/// Propagate the shell to `time_s` and assemble the grid ISL graph.
///
/// Node `p*S + s` sits at argument of latitude
/// `2π s/S + ω_orb t + 2π F p/(P S)` in the plane with RAAN `2π p/P`.
pub fn build_snapshot(config: &WalkerConfig, time_s: f64) -> Result<TopologySnapshot, ConfigError> {
    config.validate()?;
    let planes = config.planes;
    let spp = config.sats_per_plane;
    let n = config.node_count();
    let a = config.semi_major_axis_km();
    let inc = config.inclination_deg.to_radians();
    let omega_orb = (MU_EARTH / (a * a * a)).sqrt();
    let t = time_s + config.epoch_offset_s;
    let earth_angle = if config.earth_rotation {
        2.0 * PI / SIDEREAL_DAY_S * t
    } else {
        0.0
    };

    let mut nodes = Vec::with_capacity(n);
    for p in 0..planes {
        let raan = 2.0 * PI * p as f64 / planes as f64;
        let phase = 2.0 * PI * config.phasing_factor as f64 * p as f64 / n as f64;
        for s in 0..spp {
            let u = 2.0 * PI * s as f64 / spp as f64 + omega_orb * t + phase;
            let (sin_u, cos_u) = u.sin_cos();
            let (sin_raan, cos_raan) = raan.sin_cos();
            let (sin_inc, cos_inc) = inc.sin_cos();
            // ECI unit vector of the orbital position.
            let xi = cos_raan * cos_u - sin_raan * sin_u * cos_inc;
            let yi = sin_raan * cos_u + cos_raan * sin_u * cos_inc;
            let zi = sin_u * sin_inc;
            // Rotate into ECEF by the accumulated Earth rotation angle.
            let (sin_g, cos_g) = earth_angle.sin_cos();
            let x = (xi * cos_g + yi * sin_g) * a;
            let y = (-xi * sin_g + yi * cos_g) * a;
            let z = zi * a;
            let latitude_deg = zi.clamp(-1.0, 1.0).asin().to_degrees();
            let longitude_deg = normalize_lon_deg(y.atan2(x).to_degrees());
            nodes.push(SatelliteState {
                node_id: p * spp + s,
                plane: p,
                slot: s,
                latitude_deg,
                longitude_deg,
                altitude_km: config.altitude_km,
                ecef_position_km: [x, y, z],
            });
        }
    }

    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut edges = Vec::new();
    let mut push_edge = |a_id: usize, b_id: usize, kind: EdgeKind, nodes: &[SatelliteState], edges: &mut Vec<IslEdge>| {
        if a_id == b_id {
            return;
        }
        let (u, v) = if a_id < b_id { (a_id, b_id) } else { (b_id, a_id) };
        if !seen.insert((u, v)) {
            return;
        }
        let pa = nodes[u].ecef_position_km;
        let pb = nodes[v].ecef_position_km;
        let d = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2)).sqrt();
        edges.push(IslEdge {
            u,
            v,
            delay_ms: d / SPEED_OF_LIGHT_KM_S * 1000.0,
            capacity: 1.0,
            kind,
        });
    };

    for p in 0..planes {
        for s in 0..spp {
            let id = p * spp + s;
            // Intra-plane ring: slot +1 (mod S); -1 is the same edge set.
            if spp > 1 {
                let fwd = p * spp + (s + 1) % spp;
                push_edge(id, fwd, EdgeKind::IntraPlane, &nodes, &mut edges);
            }
            // Inter-plane: same slot in plane +1 (mod P), torus wrap.
            if planes > 1 {
                let next = ((p + 1) % planes) * spp + s;
                push_edge(id, next, EdgeKind::InterPlane, &nodes, &mut edges);
            }
        }
    }
    edges.sort_by(|a, b| (a.u, a.v).cmp(&(b.u, b.v)));
    let adjacency = build_adjacency(n, &edges);

    Ok(TopologySnapshot {
        time_s,
        config: config.clone(),
        nodes,
        edges,
        adjacency,
    })
}

/// BFS hop count on the unconstrained snapshot; `None` when unreachable.
pub fn min_hop_distance(snapshot: &TopologySnapshot, src: usize, dst: usize) -> Option<usize> {
    let n = snapshot.node_count();
    if src >= n || dst >= n {
        return None;
    }
    if src == dst {
        return Some(0);
    }
    let mut dist = vec![usize::MAX; n];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &snapshot.adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                if v == dst {
                    return Some(dist[v]);
                }
                queue.push_back(v);
            }
        }
    }
    None
}

/// Geographic box, wrap-around permitted in longitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub name: String,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Region {
    pub fn contains(&self, lat_deg: f64, lon_deg: f64) -> bool {
        if lat_deg < self.lat_min || lat_deg > self.lat_max {
            return false;
        }
        let lon = normalize_lon_deg(lon_deg);
        if self.lon_min <= self.lon_max {
            lon >= self.lon_min && lon <= self.lon_max
        } else {
            lon >= self.lon_min || lon <= self.lon_max
        }
    }
}

/// Named regions loaded from the shipped catalog (or a custom CSV).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCatalog {
    regions: Vec<Region>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("region catalog line {0}: expected `name,lat_min,lat_max,lon_min,lon_max`")]
    Malformed(usize),
    #[error("region catalog line {0}: duplicate region name {1:?}")]
    Duplicate(usize, String),
    #[error("failed to read region catalog: {0}")]
    Io(#[from] std::io::Error),
}

impl RegionCatalog {
    pub fn from_csv(text: &str) -> Result<Self, CatalogError> {
        let mut regions = Vec::new();
        let mut names = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("name,")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(CatalogError::Malformed(i + 1));
            }
            let name = fields[0].to_ascii_lowercase();
            if !names.insert(name.clone()) {
                return Err(CatalogError::Duplicate(i + 1, name));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|_| CatalogError::Malformed(i + 1));
            regions.push(Region {
                name,
                lat_min: parse(fields[1])?,
                lat_max: parse(fields[2])?,
                lon_min: parse(fields[3])?,
                lon_max: parse(fields[4])?,
            });
        }
        Ok(Self { regions })
    }

    pub fn from_csv_file(path: &std::path::Path) -> Result<Self, CatalogError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&Region> {
        let lower = name.to_ascii_lowercase();
        self.regions.iter().find(|r| r.name == lower)
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().map(|r| r.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

static BUILTIN_CATALOG: Lazy<RegionCatalog> = Lazy::new(|| {
    RegionCatalog::from_csv(include_str!("../assets/regions.csv")).expect("shipped catalog is valid")
});

/// The catalog shipped with the artifact (14 regions).
pub fn default_catalog() -> &'static RegionCatalog {
    &BUILTIN_CATALOG
}

/// Nodes whose sub-satellite point falls inside the named region.
pub fn region_nodes(
    snapshot: &TopologySnapshot,
    catalog: &RegionCatalog,
    region_name: &str,
) -> Result<BTreeSet<usize>, UnknownRegion> {
    let region = catalog
        .get(region_name)
        .ok_or_else(|| UnknownRegion(region_name.to_string()))?;
    Ok(snapshot
        .nodes
        .iter()
        .filter(|n| region.contains(n.latitude_deg, n.longitude_deg))
        .map(|n| n.node_id)
        .collect())
}
