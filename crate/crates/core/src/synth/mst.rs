use std::collections::VecDeque;

use super::{accountant_for, measure, Fitted};
use crate::data::Dataset;
use crate::dp::{exponential_choice, NoiseKind, PrivacyBudget};
use crate::error::{invalid, Result};
use crate::marginals::{marginal, mi_sensitivity, mutual_information, to_distribution, MarginalQuery};
use crate::model::{ConditionalTable, JointModel, Network, SpanningTree};
use crate::seed::Rng;

/// Exact pairwise mutual information, `mi[i][j]` for i != j.
pub(crate) fn pairwise_mi(data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let d = data.schema().len();
    let mut mi = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let v = mutual_information(&marginal(data, &MarginalQuery::new([i, j])?)?)?;
            mi[i][j] = v;
            mi[j][i] = v;
        }
    }
    Ok(mi)
}

/// Grows a spanning tree from attribute 0, adding one cut edge at a time.
/// With `eps_per_edge` each edge is drawn by the exponential mechanism on
/// its mutual information; without it the heaviest edge is taken.
pub fn select_tree(data: &Dataset, eps_per_edge: Option<f64>, rng: &mut Rng) -> Result<SpanningTree> {
    let d = data.schema().len();
    if d < 2 {
        return Err(invalid("a spanning tree needs at least 2 attributes"));
    }
    let mi = pairwise_mi(data)?;
    let sens = mi_sensitivity(data.n());
    let mut in_tree = vec![false; d];
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(d - 1);
    for _ in 1..d {
        let cut: Vec<(usize, usize)> = (0..d)
            .filter(|&u| in_tree[u])
            .flat_map(|u| (0..d).filter(|&v| !in_tree[v]).map(move |v| (u, v)))
            .collect();
        let scores: Vec<f64> = cut.iter().map(|&(u, v)| mi[u][v]).collect();
        let k = match eps_per_edge {
            Some(eps) => exponential_choice(&scores, sens, eps, rng)?,
            None => scores
                .iter()
                .enumerate()
                .fold(0, |best, (i, &s)| if s > scores[best] { i } else { best }),
        };
        let (u, v) = cut[k];
        in_tree[v] = true;
        edges.push((u, v));
    }
    Ok(SpanningTree { root: 0, edges })
}

/// Thirds of the budget: all 1-way marginals, tree selection, and the 2-way
/// marginal of every tree edge. The root's distribution comes from its
/// 1-way measurement; each child is conditioned on its parent using the
/// edge's 2-way measurement alone.
pub fn mst_fit(data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
    let schema = data.schema();
    let d = schema.len();
    if d < 2 {
        return Err(invalid("mst needs at least 2 attributes"));
    }
    let mut acc = accountant_for(budget, NoiseKind::Laplace)?;
    let third = budget.epsilon() / 3.0;

    let one_way = PrivacyBudget::pure(third / d as f64)?;
    let mut ones = Vec::with_capacity(d);
    for a in 0..d {
        let q = MarginalQuery::new([a])?;
        ones.push(measure(data, &q, one_way, NoiseKind::Laplace, &mut acc, format!("mst/1way/{a}"), rng)?);
    }

    let per_edge = PrivacyBudget::pure(third / (d - 1) as f64)?;
    for k in 0..d - 1 {
        acc.charge(format!("mst/select/{k}"), per_edge)?;
    }
    let tree = select_tree(data, Some(per_edge.epsilon()), rng)?;

    let mut pairs = Vec::with_capacity(d - 1);
    for &(u, v) in &tree.edges {
        let q = MarginalQuery::new([u, v])?;
        let t = measure(data, &q, per_edge, NoiseKind::Laplace, &mut acc, format!("mst/2way/{u}-{v}"), rng)?;
        pairs.push(((u, v), to_distribution(&t)));
    }

    let mut children = vec![Vec::new(); d];
    for &(u, v) in &tree.edges {
        children[u].push(v);
    }
    let mut conditionals = vec![ConditionalTable::root(tree.root, &to_distribution(&ones[tree.root]).cells)];
    let mut bfs_edges = Vec::with_capacity(d - 1);
    let mut queue = VecDeque::from([tree.root]);
    while let Some(u) = queue.pop_front() {
        for &v in &children[u] {
            let (_, t) = pairs.iter().find(|(e, _)| *e == (u, v)).expect("edge measured");
            conditionals.push(ConditionalTable::from_joint(t, v)?);
            bfs_edges.push((u, v));
            queue.push_back(v);
        }
    }
    let tree = SpanningTree {
        root: tree.root,
        edges: bfs_edges,
    };
    Ok(Fitted {
        model: JointModel::Tree {
            tree,
            network: Network { conditionals },
        },
        accountant: acc,
    })
}
