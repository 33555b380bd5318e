//! Ambulance location on a random planar city.
//!
//! Stations are a subset of the city's nodes; the level of a station is
//! its number of stationed ambulances, with the fleet total fixed by a
//! master row. Calls arrive at nodes over a day; a call is late when no
//! ambulance reaches it within the response target. The per-station
//! measures count late calls among the callers whose nearest station is
//! that station.
//!
//! Dispatch follows an earliest-arrival rule: the call is assigned to
//! whichever staffed station's next-free ambulance would reach it first,
//! even if that ambulance is still busy when the call is made. A near
//! but briefly busy crew therefore beats a distant idle one. The measures
//! are still not perfectly monotone in the levels — an added ambulance
//! can steal an early call and reshuffle later availability — so this
//! model runs the cut engine in approximate-validity mode.

use serde::{Deserialize, Serialize};

use num_bigint::BigUint;

use crate::engine::{SimProblem, ValidityMode, WindowPlan};
use crate::instance::{LevelDomain, ObjectiveMode, ObjectiveSpec};
use crate::master::MasterModel;
use crate::rng::Stream;

/// How to read the per-node arrival intensity `base - slope * degree`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrivalLaw {
    /// The quantity is the mean minutes between calls at the node.
    MeanGap,
    /// The quantity is the expected number of calls over the horizon.
    RatePerHorizon,
}

/// Generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlpParams {
    pub nodes: usize,
    /// The city is a `box_size` by `box_size` square.
    pub box_size: f64,
    pub min_dist: f64,
    pub max_degree: usize,
    pub stations: usize,
    pub hospitals: usize,
    /// Fleet size fixed by the master row.
    pub fleet: u32,
    pub max_per_station: u32,
    /// Response-time target in minutes; strictly later arrivals are late.
    pub response_limit: f64,
    pub horizon_minutes: f64,
    /// Pre-trip delay: lognormal moment-matched to this mean and standard
    /// deviation (minutes).
    pub pretrip_mean: f64,
    pub pretrip_std: f64,
    pub onscene_mean: f64,
    pub hospital_prob: f64,
    pub handover_mean: f64,
    /// Arrival intensity `base_gap - gap_per_degree * degree(v)`.
    pub base_gap: f64,
    pub gap_per_degree: f64,
    pub arrival_law: ArrivalLaw,
    pub scenarios: usize,
    pub seed: u64,
}

impl AlpParams {
    /// The benchmark configuration: 100 nodes in a 40x40 city, 40
    /// stations, 10 hospitals, at most one ambulance per station.
    pub fn standard(seed: u64, scenarios: usize) -> Self {
        AlpParams {
            nodes: 100,
            box_size: 40.0,
            min_dist: 2.0,
            max_degree: 5,
            stations: 40,
            hospitals: 10,
            fleet: 25,
            max_per_station: 1,
            response_limit: 9.0,
            horizon_minutes: 720.0,
            pretrip_mean: 3.25,
            pretrip_std: 1.6,
            onscene_mean: 10.0,
            hospital_prob: 0.2,
            handover_mean: 3.0,
            base_gap: 360.0,
            gap_per_degree: 10.0,
            arrival_law: ArrivalLaw::MeanGap,
            scenarios,
            seed,
        }
    }

    /// The brute-force-friendly configuration: 50 nodes in a 25x25 city,
    /// 20 stations, a fleet of 10.
    pub fn small(seed: u64) -> Self {
        let mut params = Self::standard(seed, 10);
        params.nodes = 50;
        params.box_size = 25.0;
        params.stations = 20;
        params.hospitals = 5;
        params.fleet = 10;
        params
    }

    /// A handful of nodes with heavy traffic, for property searches.
    pub fn tiny(seed: u64) -> Self {
        let mut params = Self::standard(seed, 1);
        params.nodes = 6;
        params.box_size = 12.0;
        params.max_degree = 3;
        params.stations = 3;
        params.hospitals = 1;
        params.fleet = 2;
        params.max_per_station = 2;
        params.base_gap = 120.0;
        params
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.nodes == 0 || self.stations == 0 || self.hospitals == 0 {
            return Err("the city needs nodes, stations, and hospitals".into());
        }
        if self.stations > self.nodes || self.hospitals > self.stations {
            return Err("stations exceed nodes or hospitals exceed stations".into());
        }
        if u64::from(self.fleet) > u64::from(self.max_per_station) * self.stations as u64 {
            return Err("the fleet does not fit under the per-station caps".into());
        }
        if self.min_dist <= 0.0 || self.box_size <= 0.0 || self.max_degree == 0 {
            return Err("the city layout parameters must be positive".into());
        }
        if self.base_gap - self.gap_per_degree * self.max_degree as f64 <= 0.0 {
            return Err("the arrival intensity hits zero within the degree cap".into());
        }
        if self.horizon_minutes <= 0.0
            || self.response_limit <= 0.0
            || self.pretrip_mean <= 0.0
            || self.pretrip_std <= 0.0
            || self.onscene_mean <= 0.0
            || self.handover_mean <= 0.0
            || !(0.0..=1.0).contains(&self.hospital_prob)
        {
            return Err("call parameters must be positive".into());
        }
        Ok(())
    }
}

/// The city: points, road graph, stations, hospitals, and the derived
/// distance and preference tables.
#[derive(Clone, Debug, PartialEq)]
pub struct CityGraph {
    pub points: Vec<(f64, f64)>,
    pub edges: Vec<(usize, usize)>,
    /// Node ids hosting stations, ascending.
    pub stations: Vec<usize>,
    /// Node ids hosting hospitals, ascending; always a subset of the
    /// stations.
    pub hospitals: Vec<usize>,
    /// All-pairs shortest-path travel minutes.
    pub dist: Vec<Vec<f64>>,
    /// Station ranking per node: `prefs[v]` lists station indices by
    /// (distance, index).
    pub prefs: Vec<Vec<usize>>,
    /// Nodes whose first preference is each station.
    pub first_pref: Vec<Vec<usize>>,
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

impl CityGraph {
    /// Builds the derived tables from the primary fields and checks the
    /// structural invariants.
    pub fn from_parts(
        points: Vec<(f64, f64)>,
        edges: Vec<(usize, usize)>,
        stations: Vec<usize>,
        hospitals: Vec<usize>,
    ) -> Result<CityGraph, String> {
        let n = points.len();
        if stations.is_empty() {
            return Err("a city needs at least one station".into());
        }
        if stations.windows(2).any(|w| w[0] >= w[1]) || stations.iter().any(|&v| v >= n) {
            return Err("stations must be ascending node ids".into());
        }
        if hospitals.windows(2).any(|w| w[0] >= w[1])
            || hospitals.iter().any(|h| !stations.contains(h))
        {
            return Err("hospitals must be an ascending subset of the stations".into());
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if a >= n || b >= n || a == b {
                return Err("edge endpoints out of range".into());
            }
            let length = euclid(points[a], points[b]);
            adjacency[a].push((b, length));
            adjacency[b].push((a, length));
        }
        let dist: Vec<Vec<f64>> = (0..n).map(|v| dijkstra(&adjacency, v)).collect();
        if dist.iter().flatten().any(|d| !d.is_finite()) {
            return Err("the road graph is not connected".into());
        }
        let mut prefs = Vec::with_capacity(n);
        for v in 0..n {
            let mut order: Vec<usize> = (0..stations.len()).collect();
            order.sort_by(|&a, &b| {
                dist[v][stations[a]]
                    .total_cmp(&dist[v][stations[b]])
                    .then(a.cmp(&b))
            });
            prefs.push(order);
        }
        let mut first_pref = vec![Vec::new(); stations.len()];
        for v in 0..n {
            first_pref[prefs[v][0]].push(v);
        }
        Ok(CityGraph {
            points,
            edges,
            stations,
            hospitals,
            dist,
            prefs,
            first_pref,
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == v || b == v)
            .count()
    }

    /// Travel minutes from a station to a node.
    fn station_to_node(&self, station: usize, node: usize) -> f64 {
        self.dist[self.stations[station]][node]
    }

    /// Nearest hospital to a node, by (distance, hospital index).
    fn nearest_hospital(&self, node: usize) -> usize {
        let mut best = 0usize;
        for h in 1..self.hospitals.len() {
            if self.dist[node][self.hospitals[h]] < self.dist[node][self.hospitals[best]] {
                best = h;
            }
        }
        best
    }
}

/// Min-heap entry for Dijkstra; ordered by distance then node.
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    dist[source] = 0.0;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, length) in &adjacency[node] {
            let candidate = d + length;
            if candidate < dist[next] {
                dist[next] = candidate;
                heap.push(HeapEntry {
                    dist: candidate,
                    node: next,
                });
            }
        }
    }
    dist
}

/// Generates the random city: rejection-sampled points, threshold-grown
/// edges under the degree cap, then station and hospital draws.
pub fn generate_city(params: &AlpParams) -> Result<CityGraph, String> {
    let n = params.nodes;
    let stream = Stream::new(params.seed, "alp-city", 0);
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut counter = 0u64;
    let cap = 10_000u64.saturating_mul(n as u64);
    while points.len() < n {
        if counter / 2 >= cap {
            return Err(format!(
                "city generation exhausted {cap} placement attempts (seed {})",
                params.seed
            ));
        }
        let candidate = (
            stream.f64_at(counter) * params.box_size,
            stream.f64_at(counter + 1) * params.box_size,
        );
        counter += 2;
        if points
            .iter()
            .all(|&p| euclid(p, candidate) >= params.min_dist)
        {
            points.push(candidate);
        }
    }

    // Candidate edges by (length, endpoints); rebuilt from scratch at
    // each threshold until the graph connects.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((euclid(points[i], points[j]), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let diagonal = params.box_size * std::f64::consts::SQRT_2;
    let mut threshold = params.min_dist;
    let edges = loop {
        let mut degrees = vec![0usize; n];
        let mut edges = Vec::new();
        for &(length, i, j) in &pairs {
            if length >= threshold {
                break;
            }
            if degrees[i] < params.max_degree && degrees[j] < params.max_degree {
                degrees[i] += 1;
                degrees[j] += 1;
                edges.push((i, j));
            }
        }
        // Connectivity by breadth-first search.
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1usize;
        while let Some(v) = queue.pop_front() {
            for &(a, b) in &edges {
                let next = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    reached += 1;
                    queue.push_back(next);
                }
            }
        }
        if reached == n {
            break edges;
        }
        threshold += 1.0;
        if threshold > diagonal + 1.0 {
            return Err(format!(
                "no connected graph below the city diagonal (seed {})",
                params.seed
            ));
        }
    };

    let shuffle = |label: &str, len: usize| -> Vec<usize> {
        let stream = Stream::new(params.seed, label, 0);
        let mut order: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = stream.int_at((len - 1 - i) as u64, 0, i as i64) as usize;
            order.swap(i, j);
        }
        order
    };
    let mut stations: Vec<usize> = shuffle("alp-stations", n)
        .into_iter()
        .take(params.stations)
        .collect();
    stations.sort_unstable();
    let mut hospitals: Vec<usize> = shuffle("alp-hospitals", params.stations)
        .into_iter()
        .take(params.hospitals)
        .map(|i| stations[i])
        .collect();
    hospitals.sort_unstable();

    CityGraph::from_parts(points, edges, stations, hospitals)
}

/// One emergency call and its sampled random elements; times in minutes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Call {
    pub node: usize,
    pub time: f64,
    pub pretrip_delay: f64,
    pub onscene_time: f64,
    pub needs_hospital: bool,
    pub hospital_time: f64,
}

/// One scenario: a day of calls, time-ordered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlpScenario {
    pub calls: Vec<Call>,
}

impl AlpScenario {
    pub fn validate(&self, horizon: f64) -> Result<(), String> {
        for (index, call) in self.calls.iter().enumerate() {
            if !(0.0..=horizon).contains(&call.time) {
                return Err(format!("call {index} outside the horizon"));
            }
            if call.pretrip_delay < 0.0
                || call.onscene_time < 0.0
                || call.hospital_time < 0.0
            {
                return Err(format!("call {index} has a negative duration"));
            }
        }
        if self
            .calls
            .windows(2)
            .any(|w| w[1].time.total_cmp(&w[0].time) == std::cmp::Ordering::Less)
        {
            return Err("calls are not time-ordered".into());
        }
        Ok(())
    }
}

/// A generated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct AlpInstance {
    pub params: AlpParams,
    pub city: CityGraph,
    pub scenarios: Vec<AlpScenario>,
}

/// Lognormal parameters (of the underlying normal) matching a target
/// mean and standard deviation.
fn lognormal_match(mean: f64, std: f64) -> (f64, f64) {
    let sigma_sq = (1.0 + (std / mean).powi(2)).ln();
    ((mean).ln() - sigma_sq / 2.0, sigma_sq.sqrt())
}

/// Samples one scenario's calls across all nodes, time-ordered.
fn sample_scenario(params: &AlpParams, city: &CityGraph, scenario: usize) -> AlpScenario {
    let (mu, sigma) = lognormal_match(params.pretrip_mean, params.pretrip_std);
    let mut calls = Vec::new();
    for v in 0..params.nodes {
        let intensity = params.base_gap - params.gap_per_degree * city.degree(v) as f64;
        let mean_gap = match params.arrival_law {
            ArrivalLaw::MeanGap => intensity,
            ArrivalLaw::RatePerHorizon => params.horizon_minutes / intensity,
        };
        let stream = Stream::new(
            params.seed,
            "alp-call",
            (scenario * params.nodes + v) as u64,
        );
        let mut time = 0.0f64;
        let mut counter = 0u64;
        loop {
            time += stream.exp_at(counter, mean_gap);
            if time >= params.horizon_minutes {
                break;
            }
            let needs_hospital = stream.f64_at(counter + 3) < params.hospital_prob;
            let handover = stream.exp_at(counter + 4, params.handover_mean);
            calls.push(Call {
                node: v,
                time,
                pretrip_delay: stream.lognormal_at(counter + 1, mu, sigma),
                onscene_time: stream.exp_at(counter + 2, params.onscene_mean),
                needs_hospital,
                hospital_time: if needs_hospital { handover } else { 0.0 },
            });
            counter += 5;
        }
    }
    calls.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.node.cmp(&b.node)));
    AlpScenario { calls }
}

/// Generates an instance: the city once, then each scenario's call log.
pub fn generate(params: AlpParams) -> Result<AlpInstance, String> {
    params.validate()?;
    let city = generate_city(&params)?;
    let scenarios: Vec<AlpScenario> = (0..params.scenarios)
        .map(|s| sample_scenario(&params, &city, s))
        .collect();
    for scenario in &scenarios {
        scenario.validate(params.horizon_minutes)?;
    }
    Ok(AlpInstance {
        params,
        city,
        scenarios,
    })
}

impl AlpInstance {
    pub fn level_domain(&self) -> LevelDomain {
        LevelDomain::new(0, self.params.max_per_station).expect("non-empty domain")
    }

    /// The objective: no level costs, just the expected late-call count.
    pub fn objective(&self, mode: ObjectiveMode) -> ObjectiveSpec {
        ObjectiveSpec {
            level_costs: vec![0.0; self.city.stations.len()],
            measure_weight: 1.0,
            scenarios: self.params.scenarios,
            mode,
        }
    }

    /// Earliest-arrival dispatch of one scenario under allocation `y`.
    /// Returns late-call counts per station, attributing each call to its
    /// node's first-preference station.
    pub fn simulate_dispatch(&self, scenario: usize, y: &[u32]) -> Vec<i64> {
        let city = &self.city;
        let k = city.stations.len();
        let mut free: Vec<Vec<f64>> = y.iter().map(|&v| vec![0.0f64; v as usize]).collect();
        let mut late = vec![0i64; k];
        for call in &self.scenarios[scenario].calls {
            let home = city.prefs[call.node][0];
            // The (station, ambulance) whose arrival is earliest; strict
            // comparisons keep the lowest station and ambulance on ties.
            let mut best: Option<(f64, usize, usize)> = None;
            for station in 0..k {
                let crew = &free[station];
                if crew.is_empty() {
                    continue;
                }
                let mut amb = 0usize;
                for i in 1..crew.len() {
                    if crew[i] < crew[amb] {
                        amb = i;
                    }
                }
                let depart = crew[amb].max(call.time);
                let arrival =
                    depart + call.pretrip_delay + city.station_to_node(station, call.node);
                if best.is_none_or(|(b, _, _)| arrival < b) {
                    best = Some((arrival, station, amb));
                }
            }
            match best {
                None => late[home] += 1,
                Some((arrival, station, amb)) => {
                    if arrival - call.time > self.params.response_limit {
                        late[home] += 1;
                    }
                    let station_node = city.stations[station];
                    let busy_until = arrival
                        + call.onscene_time
                        + if call.needs_hospital {
                            let hospital = city.hospitals[city.nearest_hospital(call.node)];
                            city.dist[call.node][hospital]
                                + call.hospital_time
                                + city.dist[hospital][station_node]
                        } else {
                            city.dist[call.node][station_node]
                        };
                    free[station][amb] = busy_until;
                }
            }
        }
        late
    }

    /// Preference-driven window expansion rounds for the measure anchored
    /// at `station`: round `r` adds the `(r + 2)`-nd preference stations
    /// of the demand points anchored there.
    pub fn expansion_rounds(&self, station: usize) -> Vec<Vec<usize>> {
        let k = self.city.stations.len();
        let mut rounds = Vec::with_capacity(k.saturating_sub(1));
        for r in 1..k {
            let mut round: Vec<usize> = self.city.first_pref[station]
                .iter()
                .map(|&v| self.city.prefs[v][r])
                .collect();
            round.sort_unstable();
            round.dedup();
            rounds.push(round);
        }
        rounds
    }
}

/// Number of allocations of `fleet` ambulances over `stations` stations
/// with at most `cap` per station: the coefficient of `x^fleet` in
/// `(1 + x + ... + x^cap)^stations`.
pub fn feasible_count(stations: usize, cap: u32, fleet: u32) -> BigUint {
    let fleet = fleet as usize;
    let cap = cap as usize;
    let mut coeffs = vec![BigUint::ZERO; fleet + 1];
    coeffs[0] = BigUint::from(1u32);
    for _ in 0..stations {
        let mut next = vec![BigUint::ZERO; fleet + 1];
        for (total, coeff) in coeffs.iter().enumerate() {
            if *coeff == BigUint::ZERO {
                continue;
            }
            for add in 0..=cap.min(fleet - total) {
                next[total + add] += coeff;
            }
        }
        coeffs = next;
    }
    coeffs.swap_remove(fleet)
}

impl SimProblem for AlpInstance {
    fn objects(&self) -> usize {
        self.city.stations.len()
    }
    fn domain(&self) -> LevelDomain {
        self.level_domain()
    }
    fn scenarios(&self) -> usize {
        self.params.scenarios
    }
    fn measures_per_scenario(&self) -> usize {
        self.city.stations.len()
    }
    fn anchor_object(&self, key: usize) -> usize {
        key
    }
    fn initial_partners(&self, key: usize) -> Vec<usize> {
        if self.city.stations.len() < 2 {
            return Vec::new();
        }
        let mut partners: Vec<usize> = self.city.first_pref[key]
            .iter()
            .map(|&v| self.city.prefs[v][1])
            .filter(|&l| l != key)
            .collect();
        partners.sort_unstable();
        partners.dedup();
        partners
    }
    fn window_plan(&self, key: usize) -> WindowPlan {
        WindowPlan::Preferences(self.expansion_rounds(key))
    }
    fn simulate(&self, scenario: usize, levels: &[u32]) -> Vec<i64> {
        self.simulate_dispatch(scenario, levels)
    }
    fn measure_scale(&self) -> f64 {
        1.0
    }
    fn validity(&self) -> ValidityMode {
        ValidityMode::Approximate
    }
    fn extend_master(&self, master: &mut MasterModel) {
        let fleet = f64::from(self.params.fleet);
        let terms: Vec<_> = (0..self.city.stations.len())
            .map(|station| (master.y_col(station), 1.0))
            .collect();
        master.add_row(&terms, fleet, fleet);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A hand-built two-node city: both nodes are stations, node 0 is
    /// the hospital, one road of the given length.
    fn two_node_city(length: f64) -> CityGraph {
        CityGraph::from_parts(
            vec![(0.0, 0.0), (length, 0.0)],
            vec![(0, 1)],
            vec![0, 1],
            vec![0],
        )
        .unwrap()
    }

    fn quiet_call(node: usize, time: f64, onscene: f64) -> Call {
        Call {
            node,
            time,
            pretrip_delay: 0.0,
            onscene_time: onscene,
            needs_hospital: false,
            hospital_time: 0.0,
        }
    }

    fn hand_instance(city: CityGraph, calls: Vec<Call>) -> AlpInstance {
        let mut params = AlpParams::standard(0, 1);
        params.nodes = city.points.len();
        params.stations = city.stations.len();
        params.hospitals = city.hospitals.len();
        params.fleet = 1;
        params.max_per_station = 2;
        AlpInstance {
            params,
            city,
            scenarios: vec![AlpScenario { calls }],
        }
    }

    #[test]
    fn two_nodes_connect_once_the_threshold_reaches_them() {
        let mut params = AlpParams::standard(5, 1);
        params.nodes = 2;
        params.stations = 1;
        params.hospitals = 1;
        params.fleet = 1;
        let city = generate_city(&params).unwrap();
        assert_eq!(city.edges.len(), 1);
        assert!(city.dist[0][1].is_finite());
    }

    #[test]
    fn generated_cities_respect_the_structural_invariants() {
        for seed in 0..100 {
            let params = AlpParams::small(seed);
            let city = generate_city(&params).unwrap();
            assert_eq!(city.points.len(), 50);
            assert_eq!(city.stations.len(), 20);
            assert_eq!(city.hospitals.len(), 5);
            for v in 0..50 {
                assert!(city.degree(v) <= params.max_degree, "seed {seed} node {v}");
                for w in 0..50 {
                    assert!(city.dist[v][w].is_finite(), "seed {seed} disconnected");
                }
            }
            for h in &city.hospitals {
                assert!(city.stations.contains(h), "seed {seed} hospital off-station");
            }
            for pair in city.points.iter().enumerate().flat_map(|(i, &a)| {
                city.points[i + 1..].iter().map(move |&b| euclid(a, b))
            }) {
                assert!(pair >= params.min_dist, "seed {seed} nodes too close");
            }
        }
    }

    #[test]
    fn preference_rows_are_distance_sorted_permutations() {
        let city = generate_city(&AlpParams::small(3)).unwrap();
        for v in 0..50 {
            let mut sorted = city.prefs[v].clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..20).collect::<Vec<_>>());
            for w in city.prefs[v].windows(2) {
                assert!(
                    city.dist[v][city.stations[w[0]]] <= city.dist[v][city.stations[w[1]]]
                );
            }
        }
    }

    #[test]
    fn a_single_call_gets_the_textbook_response_time() {
        let city = two_node_city(5.0);
        let mut call = quiet_call(1, 10.0, 4.0);
        call.pretrip_delay = 2.0;
        let instance = hand_instance(city, vec![call]);
        // Ambulance at station 1 (the call's own node): response is just
        // the pre-trip delay.
        assert_eq!(instance.simulate_dispatch(0, &[0, 1]), vec![0, 0]);
        // Ambulance only at station 0, five minutes away: response is
        // 2 + 5 = 7, still inside the nine-minute target.
        assert_eq!(instance.simulate_dispatch(0, &[1, 0]), vec![0, 0]);
        // Stretch the road so the same dispatch arrives late.
        let far = two_node_city(8.0);
        let mut call = quiet_call(1, 10.0, 4.0);
        call.pretrip_delay = 2.0;
        let instance = hand_instance(far, vec![call]);
        assert_eq!(instance.simulate_dispatch(0, &[1, 0]), vec![0, 1]);
    }

    #[test]
    fn a_nearer_busy_crew_beats_a_distant_idle_one() {
        // Two calls at node 0; the first occupies the local ambulance
        // past the second call's time. With a distant second ambulance
        // the dispatcher still waits for the local crew, so both
        // allocations serve everything on time: the added ambulance does
        // not worsen the local measure.
        let city = two_node_city(20.0);
        let calls = vec![quiet_call(0, 0.0, 5.0), quiet_call(0, 3.0, 5.0)];
        let instance = hand_instance(city, calls);
        let lone = instance.simulate_dispatch(0, &[1, 0]);
        let paired = instance.simulate_dispatch(0, &[1, 1]);
        assert_eq!(lone, vec![0, 0]);
        assert_eq!(paired, vec![0, 0]);
    }

    #[test]
    fn adding_an_ambulance_can_still_worsen_a_measure() {
        // The dispatch rule defeats the simple two-station construction,
        // but availability reshuffling can still hurt: scan small dense
        // instances for a pair y <= y' with a strictly worse measure.
        let mut witness = None;
        'seeds: for seed in 0..300 {
            let instance = match generate(AlpParams::tiny(seed)) {
                Ok(instance) => instance,
                Err(_) => continue,
            };
            let k = instance.city.stations.len();
            let domain = instance.level_domain();
            let grid = crate::oracle::level_grid(k, domain);
            for y in grid {
                let base = instance.simulate_dispatch(0, &y);
                for j in 0..k {
                    if y[j] >= domain.max_level {
                        continue;
                    }
                    let mut bumped = y.clone();
                    bumped[j] += 1;
                    let after = instance.simulate_dispatch(0, &bumped);
                    if after.iter().zip(&base).any(|(a, b)| a > b) {
                        witness = Some((seed, y.clone(), j));
                        break 'seeds;
                    }
                }
            }
        }
        let (seed, y, j) = witness.expect("no violation found in 300 seeds");
        // Re-derive the violation to pin it down.
        let instance = generate(AlpParams::tiny(seed)).unwrap();
        let base = instance.simulate_dispatch(0, &y);
        let mut bumped = y;
        bumped[j] += 1;
        let after = instance.simulate_dispatch(0, &bumped);
        assert!(after.iter().zip(&base).any(|(a, b)| a > b));
    }

    #[test]
    fn an_empty_scenario_scores_zero_everywhere() {
        let instance = hand_instance(two_node_city(5.0), vec![]);
        assert_eq!(instance.simulate_dispatch(0, &[1, 1]), vec![0, 0]);
    }

    #[test]
    fn with_no_fleet_every_call_is_late_at_its_home_station() {
        let city = two_node_city(5.0);
        let calls = vec![
            quiet_call(0, 1.0, 2.0),
            quiet_call(1, 2.0, 2.0),
            quiet_call(1, 3.0, 2.0),
        ];
        let instance = hand_instance(city, calls);
        assert_eq!(instance.simulate_dispatch(0, &[0, 0]), vec![1, 2]);
    }

    #[test]
    fn late_calls_count_against_the_callers_nearest_station() {
        // Only the far station is staffed; the call near station 0 is
        // late but the tally lands on station 0, not the server.
        let city = two_node_city(20.0);
        let instance = hand_instance(city, vec![quiet_call(0, 1.0, 2.0)]);
        assert_eq!(instance.simulate_dispatch(0, &[0, 1]), vec![1, 0]);
    }

    #[test]
    fn counting_matches_direct_enumeration_on_small_boxes() {
        for stations in 1..=4usize {
            for cap in 0..=2u32 {
                for fleet in 0..=(stations as u32 * cap) {
                    let mut count = 0u64;
                    let domain = LevelDomain::new(0, cap).unwrap();
                    for y in crate::oracle::level_grid(stations, domain) {
                        if y.iter().map(|&v| u64::from(v)).sum::<u64>() == u64::from(fleet) {
                            count += 1;
                        }
                    }
                    assert_eq!(
                        feasible_count(stations, cap, fleet),
                        BigUint::from(count),
                        "stations {stations} cap {cap} fleet {fleet}"
                    );
                }
            }
        }
        assert_eq!(feasible_count(20, 1, 10), BigUint::from(184756u64));
        assert_eq!(feasible_count(40, 1, 25), BigUint::from(40225345056u64));
        assert_eq!(feasible_count(7, 3, 0), BigUint::from(1u32));
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = generate(AlpParams::small(8)).unwrap();
        let b = generate(AlpParams::small(8)).unwrap();
        assert_eq!(a, b);
        let c = generate(AlpParams::small(9)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn call_volume_tracks_the_arrival_law() {
        let mut params = AlpParams::small(15);
        params.scenarios = 30;
        let instance = generate(params).unwrap();
        let expected: f64 = (0..50)
            .map(|v| {
                720.0 / (360.0 - 10.0 * instance.city.degree(v) as f64)
            })
            .sum();
        let mean = instance
            .scenarios
            .iter()
            .map(|s| s.calls.len() as f64)
            .sum::<f64>()
            / 30.0;
        assert!(
            (mean - expected).abs() < 0.15 * expected,
            "mean {mean} vs expected {expected}"
        );
    }

    #[test]
    fn expansion_rounds_follow_the_preference_lists() {
        let instance = generate(AlpParams::small(4)).unwrap();
        let city = &instance.city;
        for station in 0..20 {
            let rounds = instance.expansion_rounds(station);
            assert_eq!(rounds.len(), 19);
            let mut expected: Vec<usize> = city.first_pref[station]
                .iter()
                .map(|&v| city.prefs[v][1])
                .collect();
            expected.sort_unstable();
            expected.dedup();
            assert_eq!(rounds[0], expected);
            let partners = instance.initial_partners(station);
            let trimmed: Vec<usize> = expected
                .iter()
                .copied()
                .filter(|&l| l != station)
                .collect();
            assert_eq!(partners, trimmed);
        }
    }
}
