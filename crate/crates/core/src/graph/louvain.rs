//! Modularity-maximising Louvain and the reconciliation to a fixed client count.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Partition};
use crate::error::{FggcdError, Result};

const RESOLUTION: f64 = 1.0;
const MAX_PASSES: usize = 100;
const MIN_GAIN: f64 = 1e-12;

/// Weighted adjacency; self-loops carry the internal weight of a super-node
/// (counted twice, so degrees are preserved across levels).
type WeightedAdj = Vec<Vec<(usize, f64)>>;

/// Community id per node, renumbered `0..k` in order of first appearance.
pub fn louvain_communities(n: usize, edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut adj: WeightedAdj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push((v, 1.0));
        adj[v].push((u, 1.0));
    }
    let mut membership: Vec<usize> = (0..n).collect();
    if edges.is_empty() {
        return membership;
    }

    loop {
        let level = one_level(&adj, rng);
        let k = level.iter().max().map_or(0, |m| m + 1);
        if k == adj.len() {
            break;
        }
        for m in membership.iter_mut() {
            *m = level[*m];
        }
        adj = aggregate(&adj, &level, k);
    }
    renumber(&membership)
}

/// Local moving phase; returns a renumbered community per (super-)node.
fn one_level(adj: &WeightedAdj, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<f64> = adj.iter().map(|nb| nb.iter().map(|(_, w)| w).sum()).collect();
    let two_m: f64 = degree.iter().sum();
    let mut community: Vec<usize> = (0..n).collect();
    let mut total: Vec<f64> = degree.clone();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for &node in &order {
            let current = community[node];
            links.clear();
            for &(nb, w) in &adj[node] {
                if nb != node {
                    *links.entry(community[nb]).or_insert(0.0) += w;
                }
            }
            total[current] -= degree[node];
            let k = degree[node];
            let gain = |c: usize, links: &BTreeMap<usize, f64>| {
                links.get(&c).copied().unwrap_or(0.0) - RESOLUTION * total[c] * k / two_m
            };
            let mut best = current;
            let mut best_gain = gain(current, &links);
            for &c in links.keys() {
                let g = gain(c, &links);
                if g > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = g;
                }
            }
            total[best] += degree[node];
            if best != current {
                community[node] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    renumber(&community)
}

fn aggregate(adj: &WeightedAdj, level: &[usize], k: usize) -> WeightedAdj {
    let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    for (u, nb) in adj.iter().enumerate() {
        for &(v, w) in nb {
            *merged[level[u]].entry(level[v]).or_insert(0.0) += w;
        }
    }
    merged.into_iter().map(|m| m.into_iter().collect()).collect()
}

fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Newman modularity `Σ_c [L_c/m − (d_c/2m)²]` of a node→community map.
pub fn modularity(n: usize, edges: &[(usize, usize)], membership: &[usize]) -> f64 {
    let m = edges.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = membership.iter().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut degree_sum = vec![0.0; k];
    let mut degree = vec![0.0; n];
    for &(u, v) in edges {
        degree[u] += 1.0;
        degree[v] += 1.0;
        if membership[u] == membership[v] {
            internal[membership[u]] += 1.0;
        }
    }
    for (node, d) in degree.iter().enumerate() {
        degree_sum[membership[node]] += d;
    }
    (0..k)
        .map(|c| internal[c] / m - (degree_sum[c] / (2.0 * m)).powi(2))
        .sum()
}

/// Louvain on the whole graph, then merge the two smallest groups or split the
/// largest (second Louvain pass on its induced subgraph) until exactly
/// `target_clients` groups remain. Client ids follow each group's smallest node.
pub fn louvain_partition(g: &Graph, target_clients: usize, seed: u64) -> Result<Partition> {
    if target_clients == 0 {
        return Err(FggcdError::InvalidArgument("need at least one client".into()));
    }
    let n = g.num_nodes();
    if target_clients > n {
        return Err(FggcdError::InvalidArgument(format!(
            "cannot split {n} nodes into {target_clients} clients"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let membership = louvain_communities(n, g.edges(), &mut rng);
    let mut groups = group_members(&membership);
    let adj = g.adjacency_lists();

    while groups.len() > target_clients {
        sort_by_size(&mut groups);
        let b = groups.remove(1);
        groups[0].extend(b);
        groups[0].sort_unstable();
    }

    while groups.len() < target_clients {
        let need = target_clients - groups.len();
        let largest = (0..groups.len())
            .max_by(|&a, &b| groups[a].len().cmp(&groups[b].len()).then(groups[b][0].cmp(&groups[a][0])))
            .expect("non-empty");
        let members = groups.swap_remove(largest);
        let mut parts = split_group(&members, &adj, &mut rng);
        while parts.len() > need + 1 {
            sort_by_size(&mut parts);
            let b = parts.remove(1);
            parts[0].extend(b);
            parts[0].sort_unstable();
        }
        groups.extend(parts);
    }

    groups.sort_by_key(|grp| grp[0]);
    let mut assignment = vec![0; n];
    for (client, grp) in groups.iter().enumerate() {
        for &node in grp {
            assignment[node] = client;
        }
    }
    Partition::from_assignment(g, assignment, target_clients)
}

fn group_members(membership: &[usize]) -> Vec<Vec<usize>> {
    let k = membership.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (node, &c) in membership.iter().enumerate() {
        groups[c].push(node);
    }
    groups.retain(|grp| !grp.is_empty());
    groups
}

/// Smallest first; ties broken by the smallest member id.
fn sort_by_size(groups: &mut [Vec<usize>]) {
    groups.sort_by(|a, b| a.len().cmp(&b.len()).then(a[0].cmp(&b[0])));
}

/// Splits a group of at least two nodes into two or more parts.
fn split_group(members: &[usize], adj: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let local: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut edges = Vec::new();
    for (i, &u) in members.iter().enumerate() {
        for &v in &adj[u] {
            if let Some(&j) = local.get(&v) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
    }
    let sub = louvain_communities(members.len(), &edges, rng);
    let parts: Vec<Vec<usize>> = group_members(&sub)
        .into_iter()
        .map(|p| p.into_iter().map(|i| members[i]).collect())
        .collect();
    if parts.len() >= 2 {
        return parts;
    }

    // Louvain found a single community: bisect along a BFS order so each half
    // stays as connected as possible.
    let mut local_adj = vec![Vec::new(); members.len()];
    for &(i, j) in &edges {
        local_adj[i].push(j);
        local_adj[j].push(i);
    }
    let mut seen = vec![false; members.len()];
    let mut order = Vec::with_capacity(members.len());
    for start in 0..members.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &local_adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    let half = members.len() / 2;
    let mut a: Vec<usize> = order[..half].iter().map(|&i| members[i]).collect();
    let mut b: Vec<usize> = order[half..].iter().map(|&i| members[i]).collect();
    a.sort_unstable();
    b.sort_unstable();
    vec![a, b]
}
