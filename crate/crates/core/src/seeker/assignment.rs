use crate::environment::GridSpec;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)). Returns `row -> column`.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based arrays; column 0 is a virtual start node.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[r0 - 1][j - 1] - u[r0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[owner[j] - 1] = j - 1;
    }
    out
}

/// Cell for each agent, minimizing the total squared grid distance moved.
/// Agents already standing on a target keep it when that is optimal.
pub fn assign_agents(grid: &GridSpec, targets: &[usize], previous: &[usize]) -> Vec<usize> {
    assert_eq!(targets.len(), previous.len(), "one target per agent");
    let cost: Vec<Vec<i64>> = previous
        .iter()
        .map(|&p| targets.iter().map(|&t| grid.squared_distance(p, t)).collect())
        .collect();
    hungarian(&cost).into_iter().map(|j| targets[j]).collect()
}
