//! Road graphs with edge lengths in meters, stations snapped to nodes, and
//! shortest-path routing.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::geo::{haversine, LatLon};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct NodeRow {
    id: String,
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct EdgeRow {
    u: String,
    v: String,
    length_m: f64,
}

/// Undirected road graph. Edge geometry is the straight chord between the
/// endpoint coordinates.
#[derive(Clone, Debug)]
pub struct RoadGraph {
    ids: Vec<String>,
    coords: Vec<LatLon>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    /// Node indices from source to target inclusive.
    pub nodes: Vec<usize>,
    pub length: f64,
}

impl RoadGraph {
    pub fn new(nodes: Vec<(String, LatLon)>, edges: Vec<(String, String, f64)>) -> Result<Self> {
        let mut index = HashMap::new();
        let mut ids = Vec::with_capacity(nodes.len());
        let mut coords = Vec::with_capacity(nodes.len());
        for (id, c) in nodes {
            if !c.is_valid() {
                return Err(Error::InvalidConfig(format!(
                    "node {id}: invalid coordinates {c:?}"
                )));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate node id {id}")));
            }
            ids.push(id);
            coords.push(c);
        }
        let mut adj = vec![Vec::new(); ids.len()];
        for (u, v, len) in edges {
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "edge {u}-{v}: length must be positive, got {len}"
                )));
            }
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| {
                    Error::InvalidConfig(format!("edge references unknown node {id}"))
                })
            };
            let (a, b) = (lookup(&u)?, lookup(&v)?);
            adj[a].push((b, len));
            adj[b].push((a, len));
        }
        Ok(Self {
            ids,
            coords,
            index,
            adj,
        })
    }

    /// Reads `nodes.csv` (id,lat,lon) and `edges.csv` (u,v,length_m).
    pub fn from_csv(nodes_path: &Path, edges_path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(nodes_path).map_err(|e| Error::csv(nodes_path, e))?;
        let nodes = rdr
            .deserialize()
            .map(|r| {
                let r: NodeRow = r.map_err(|e| Error::csv(nodes_path, e))?;
                Ok((r.id, LatLon::new(r.lat, r.lon)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rdr = csv::Reader::from_path(edges_path).map_err(|e| Error::csv(edges_path, e))?;
        let edges = rdr
            .deserialize()
            .map(|r| {
                let r: EdgeRow = r.map_err(|e| Error::csv(edges_path, e))?;
                Ok((r.u, r.v, r.length_m))
            })
            .collect::<Result<Vec<_>>>()?;
        if nodes.is_empty() {
            return Err(Error::malformed(nodes_path, "no nodes"));
        }
        Self::new(nodes, edges)
    }

    /// Loads `nodes.csv` and `edges.csv` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        Self::from_csv(&dir.join("nodes.csv"), &dir.join("edges.csv"))
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn coord(&self, i: usize) -> LatLon {
        self.coords[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// Closest node by haversine distance; ties go to the lower index.
    pub fn nearest_node(&self, p: LatLon) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, &c) in self.coords.iter().enumerate() {
            let d = haversine(p, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Dijkstra from `source`: distances and predecessors.
    pub fn shortest_paths(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }

        let mut dist = vec![f64::INFINITY; self.node_count()];
        let mut pred = vec![None; self.node_count()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adj[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(u);
                    heap.push(Entry(nd, v));
                }
            }
        }
        (dist, pred)
    }

    /// Shortest route, or `None` when `to` is unreachable.
    pub fn route(&self, from: usize, to: usize) -> Option<Route> {
        let (dist, pred) = self.shortest_paths(from);
        if !dist[to].is_finite() {
            return None;
        }
        let mut nodes = vec![to];
        let mut cur = to;
        while let Some(p) = pred[cur] {
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        Some(Route {
            nodes,
            length: dist[to],
        })
    }

    /// Errors unless every node in `nodes` is reachable from the first.
    pub fn check_connected(&self, nodes: &[usize]) -> Result<()> {
        let Some(&first) = nodes.first() else {
            return Ok(());
        };
        let (dist, _) = self.shortest_paths(first);
        match nodes.iter().find(|&&v| !dist[v].is_finite()) {
            Some(&v) => Err(Error::Unreachable {
                from: self.ids[first].clone(),
                to: self.ids[v].clone(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub id: String,
    pub coord: LatLon,
    /// Nearest graph node.
    pub node: usize,
}

/// Reads stations (id,lat,lon), snaps each to its nearest node and checks the
/// touched nodes are mutually reachable.
pub fn load_stations(path: &Path, graph: &RoadGraph) -> Result<Vec<Station>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut stations: Vec<Station> = Vec::new();
    for row in rdr.deserialize() {
        let r: NodeRow = row.map_err(|e| Error::csv(path, e))?;
        let coord = LatLon::new(r.lat, r.lon);
        if !coord.is_valid() {
            return Err(Error::malformed(
                path,
                format!("station {}: invalid coordinates", r.id),
            ));
        }
        if stations.iter().any(|s| s.id == r.id) {
            return Err(Error::malformed(
                path,
                format!("duplicate station id {}", r.id),
            ));
        }
        stations.push(Station {
            node: graph.nearest_node(coord),
            id: r.id,
            coord,
        });
    }
    if stations.is_empty() {
        return Err(Error::malformed(path, "no stations"));
    }
    let nodes: Vec<usize> = stations.iter().map(|s| s.node).collect();
    graph.check_connected(&nodes)?;
    Ok(stations)
}
