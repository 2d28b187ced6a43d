//! Sampling of the rank-2 multiplicative graph and connected components
//! with vector-valued masses.
//!
//! Sampling is Poissonized per block pair: draw a Poisson number of
//! multigraph edges with weight-proportional endpoints, then discard
//! self-loops and duplicates. The thinned Poisson counts per vertex pair are
//! independent Poisson(q_ij w_l w_r), so each simple edge appears
//! independently with probability `1 - exp(-q_ij w_l w_r)`, exactly the
//! target law, in O(edges) time.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::params::{ModelSpec, WeightVector};

/// Walker alias table for weight-proportional index sampling; collapses to
/// a plain uniform draw for constant weight vectors.
enum EndpointSampler {
    Uniform { n: usize },
    Alias { prob: Vec<f64>, alias: Vec<u32> },
}

impl EndpointSampler {
    fn new(w: &WeightVector) -> Self {
        let n = w.len();
        if w.is_constant() {
            return Self::Uniform { n };
        }
        let total = w.sigma(1);
        let scaled: Vec<f64> = w.entries().iter().map(|&x| x * n as f64 / total).collect();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0u32; n];
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        let mut scaled = scaled;
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            prob[s as usize] = scaled[s as usize];
            alias[s as usize] = l;
            scaled[l as usize] = (scaled[l as usize] + scaled[s as usize]) - 1.0;
            if scaled[l as usize] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        for i in small.into_iter().chain(large) {
            prob[i as usize] = 1.0;
        }
        Self::Alias { prob, alias }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        match self {
            Self::Uniform { n } => rng.random_range(0..*n as u32),
            Self::Alias { prob, alias } => {
                let n = prob.len();
                let i = rng.random_range(0..n as u32);
                if rng.random::<f64>() < prob[i as usize] {
                    i
                } else {
                    alias[i as usize]
                }
            }
        }
    }
}

/// A sampled simple graph on the two-type vertex set. Vertices are encoded
/// globally: type-1 vertex `l` is `l`, type-2 vertex `r` is `n1 + r`
/// (0-based internally; exports are 1-based).
#[derive(Debug, Clone)]
pub struct Rank2Graph {
    pub n1: usize,
    pub n2: usize,
    /// canonical edges `(a, b)` with `a < b`, sorted, no duplicates
    pub edges: Vec<(u32, u32)>,
    pub spec: ModelSpec,
}

impl Rank2Graph {
    pub fn n_vertices(&self) -> usize {
        self.n1 + self.n2
    }

    /// (type, within-type index), both 0-based.
    pub fn decode(&self, v: u32) -> (usize, usize) {
        let v = v as usize;
        if v < self.n1 {
            (0, v)
        } else {
            (1, v - self.n1)
        }
    }

    pub fn weight_of(&self, v: u32) -> f64 {
        let (t, i) = self.decode(v);
        self.spec.weights(t).entries()[i]
    }

    /// Edge list CSV `type_a,index_a,type_b,index_b` with 1-based types and
    /// indices.
    pub fn dump_edges_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "type_a,index_a,type_b,index_b")?;
        for &(a, b) in &self.edges {
            let (ta, ia) = self.decode(a);
            let (tb, ib) = self.decode(b);
            writeln!(out, "{},{},{},{}", ta + 1, ia + 1, tb + 1, ib + 1)?;
        }
        Ok(())
    }
}

/// Reusable sampler: alias tables are built once per spec.
pub struct GraphSampler {
    spec: ModelSpec,
    samplers: [EndpointSampler; 2],
}

impl GraphSampler {
    pub fn new(spec: &ModelSpec) -> Self {
        Self {
            spec: spec.clone(),
            samplers: [EndpointSampler::new(&spec.w1), EndpointSampler::new(&spec.w2)],
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Rank2Graph {
        let n1 = self.spec.w1.len();
        let n2 = self.spec.w2.len();
        let s1 = self.spec.w1.sigma(1);
        let s2 = self.spec.w2.sigma(1);
        let q = self.spec.q;
        let mut edges: Vec<u64> = Vec::new();

        let draw_block = |rng: &mut _, mean: f64, ti: usize, tj: usize, edges: &mut Vec<u64>| {
            if mean <= 0.0 {
                return;
            }
            let count = Poisson::new(mean).unwrap().sample(rng) as u64;
            for _ in 0..count {
                let a = self.samplers[ti].sample(rng) + if ti == 1 { n1 as u32 } else { 0 };
                let b = self.samplers[tj].sample(rng) + if tj == 1 { n1 as u32 } else { 0 };
                if a == b {
                    continue; // self-loop
                }
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                edges.push(((lo as u64) << 32) | hi as u64);
            }
        };

        draw_block(rng, q[0][0] * s1 * s1 / 2.0, 0, 0, &mut edges);
        draw_block(rng, q[1][1] * s2 * s2 / 2.0, 1, 1, &mut edges);
        draw_block(rng, q[0][1] * s1 * s2, 0, 1, &mut edges);

        edges.sort_unstable();
        edges.dedup();
        let edges = edges.into_iter().map(|e| ((e >> 32) as u32, e as u32)).collect();
        Rank2Graph { n1, n2, edges, spec: self.spec.clone() }
    }
}

/// Samples one graph; build a `GraphSampler` instead when drawing many
/// replicas from the same spec.
pub fn sample_graph(spec: &ModelSpec, rng: &mut impl Rng) -> Rank2Graph {
    GraphSampler::new(spec).sample(rng)
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, x: u32) -> u32 {
        let mut x = x;
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Mass vector and vertex counts of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentMass {
    pub mass: [f64; 2],
    pub count: [u32; 2],
    /// smallest global vertex index in the component (tie-break key)
    pub min_vertex: u32,
}

/// All components of a graph ordered by `(mass1 desc, mass2 desc, smallest
/// vertex asc)`, with the vertex -> component map.
#[derive(Debug, Clone)]
pub struct ComponentMassList {
    pub components: Vec<ComponentMass>,
    /// vertex (global index) -> position in `components`
    pub membership: Vec<u32>,
}

fn order_key(c: &ComponentMass) -> (f64, f64, u32) {
    (c.mass[0], c.mass[1], c.min_vertex)
}

fn sort_components(components: &mut [ComponentMass]) {
    components.sort_by(|a, b| {
        let ka = order_key(a);
        let kb = order_key(b);
        kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1)).then(ka.2.cmp(&kb.2))
    });
}

/// Connected components with per-type masses via union-find over all
/// vertices.
pub fn components(g: &Rank2Graph) -> ComponentMassList {
    let n = g.n_vertices();
    let mut uf = UnionFind::new(n);
    for &(a, b) in &g.edges {
        uf.union(a, b);
    }
    // root -> dense component index
    let mut comp_of_root = vec![u32::MAX; n];
    let mut components: Vec<ComponentMass> = Vec::new();
    let mut roots = Vec::with_capacity(n);
    for v in 0..n as u32 {
        let r = uf.find(v);
        roots.push(r);
        if comp_of_root[r as usize] == u32::MAX {
            comp_of_root[r as usize] = components.len() as u32;
            components.push(ComponentMass { mass: [0.0; 2], count: [0; 2], min_vertex: v });
        }
        let c = &mut components[comp_of_root[r as usize] as usize];
        let (t, _) = g.decode(v);
        c.mass[t] += g.weight_of(v);
        c.count[t] += 1;
    }
    // order and remap membership
    let mut perm: Vec<u32> = (0..components.len() as u32).collect();
    perm.sort_by(|&x, &y| {
        let ka = order_key(&components[x as usize]);
        let kb = order_key(&components[y as usize]);
        kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1)).then(ka.2.cmp(&kb.2))
    });
    let mut rank_of = vec![0u32; components.len()];
    for (rank, &old) in perm.iter().enumerate() {
        rank_of[old as usize] = rank as u32;
    }
    let ordered: Vec<ComponentMass> =
        perm.iter().map(|&old| components[old as usize]).collect();
    let membership: Vec<u32> = roots
        .iter()
        .map(|&r| rank_of[comp_of_root[r as usize] as usize])
        .collect();
    ComponentMassList { components: ordered, membership }
}

impl ComponentMassList {
    pub fn masses(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.components.iter().map(|c| c.mass)
    }

    pub fn total_mass(&self) -> [f64; 2] {
        let mut t = [0.0; 2];
        for c in &self.components {
            t[0] += c.mass[0];
            t[1] += c.mass[1];
        }
        t
    }

    /// Component CSV `component_id,mass1,mass2,num_type1,num_type2`.
    pub fn dump_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "component_id,mass1,mass2,num_type1,num_type2")?;
        for (id, c) in self.components.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", id, c.mass[0], c.mass[1], c.count[0], c.count[1])?;
        }
        Ok(())
    }
}

/// Ordering coordinate for `ord_by`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrdCoord {
    One,
    Two,
    Total,
}

/// Stable reordering by the chosen coordinate descending; ties by the other
/// coordinate descending, then the original position.
pub fn ord_by(list: &ComponentMassList, coord: OrdCoord) -> ComponentMassList {
    let key = |c: &ComponentMass| -> (f64, f64) {
        match coord {
            OrdCoord::One => (c.mass[0], c.mass[1]),
            OrdCoord::Two => (c.mass[1], c.mass[0]),
            OrdCoord::Total => (c.mass[0] + c.mass[1], c.mass[0]),
        }
    };
    let mut perm: Vec<u32> = (0..list.components.len() as u32).collect();
    perm.sort_by(|&x, &y| {
        let ka = key(&list.components[x as usize]);
        let kb = key(&list.components[y as usize]);
        kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1)).then(x.cmp(&y))
    });
    let mut rank_of = vec![0u32; perm.len()];
    for (rank, &old) in perm.iter().enumerate() {
        rank_of[old as usize] = rank as u32;
    }
    ComponentMassList {
        components: perm.iter().map(|&old| list.components[old as usize]).collect(),
        membership: list.membership.iter().map(|&c| rank_of[c as usize]).collect(),
    }
}

/// Exact top-k component masses without materializing per-vertex state:
/// union-find runs over edge-touched vertices only and untouched vertices
/// enter as singleton candidates. Intended for very large sparse graphs.
#[derive(Debug, Clone)]
pub struct TopComponents {
    pub top: Vec<ComponentMass>,
    pub totals: [f64; 2],
    pub n_components: usize,
}

pub fn top_components(g: &Rank2Graph, k: usize) -> TopComponents {
    // dense index over touched vertices
    let mut touched: Vec<u32> = Vec::with_capacity(g.edges.len() * 2);
    for &(a, b) in &g.edges {
        touched.push(a);
        touched.push(b);
    }
    touched.sort_unstable();
    touched.dedup();
    let idx_of = |v: u32| touched.binary_search(&v).unwrap() as u32;

    let mut uf = UnionFind::new(touched.len());
    for &(a, b) in &g.edges {
        uf.union(idx_of(a), idx_of(b));
    }
    let mut comp_of_root = vec![u32::MAX; touched.len()];
    let mut comps: Vec<ComponentMass> = Vec::new();
    for (i, &v) in touched.iter().enumerate() {
        let r = uf.find(i as u32);
        if comp_of_root[r as usize] == u32::MAX {
            comp_of_root[r as usize] = comps.len() as u32;
            comps.push(ComponentMass { mass: [0.0; 2], count: [0; 2], min_vertex: v });
        }
        let c = &mut comps[comp_of_root[r as usize] as usize];
        let (t, _) = g.decode(v);
        c.mass[t] += g.weight_of(v);
        c.count[t] += 1;
        c.min_vertex = c.min_vertex.min(v);
    }

    let touched_comps = comps.len();

    // untouched vertices are singletons; only the k heaviest per type can
    // enter the top-k, and weights are sorted non-increasing
    for typ in 0..2usize {
        let w = g.spec.weights(typ).entries();
        let offset = if typ == 1 { g.n1 as u32 } else { 0 };
        let mut found = 0usize;
        for (i, &wi) in w.iter().enumerate() {
            if found >= k {
                break;
            }
            let v = offset + i as u32;
            if touched.binary_search(&v).is_err() {
                let mut mass = [0.0; 2];
                let mut count = [0u32; 2];
                mass[typ] = wi;
                count[typ] = 1;
                comps.push(ComponentMass { mass, count, min_vertex: v });
                found += 1;
            }
        }
    }

    sort_components(&mut comps);
    let n_components = touched_comps + (g.n_vertices() - touched.len());
    let totals = [g.spec.w1.sigma(1), g.spec.w2.sigma(1)];
    comps.truncate(k);
    TopComponents { top: comps, totals, n_components }
}
