use std::collections::BTreeMap;

use crate::data::dataset::TrajectoryDataset;
use crate::data::types::WorldState;

/// Emitted when a frame holds more agents than fit into `n_max` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncationWarning {
    pub frame: u32,
    pub dropped_agents: Vec<u32>,
}

/// Assemble one [`WorldState`] per frame over the dataset's full frame range.
///
/// Frames with more than `n_max` agents keep the `n_max` agents with the
/// longest total presence in the dataset (ties broken by smaller agent id)
/// and report a truncation warning. Retained agents occupy slots sorted
/// ascending by agent id; unused slots are zeroed with a false mask.
pub fn build_world_states(
    dataset: &TrajectoryDataset,
    n_max: usize,
) -> (Vec<WorldState>, Vec<TruncationWarning>) {
    assert!(n_max >= 1, "n_max must be at least 1");
    let Some((first, last)) = dataset.frame_range() else {
        return (Vec::new(), Vec::new());
    };
    let presence: BTreeMap<u32, usize> = dataset
        .agent_ids()
        .map(|id| (id, dataset.presence_count(id)))
        .collect();

    let mut states = Vec::with_capacity((last - first) as usize + 1);
    let mut warnings = Vec::new();
    for frame in first..=last {
        let mut agents = dataset.agents_at(frame);
        if agents.len() > n_max {
            // Longest-presence retention, smaller agent_id wins ties.
            agents.sort_by_key(|s| (std::cmp::Reverse(presence[&s.agent_id]), s.agent_id));
            let dropped = agents.split_off(n_max);
            warnings.push(TruncationWarning {
                frame,
                dropped_agents: dropped.iter().map(|s| s.agent_id).collect(),
            });
            agents.sort_by_key(|s| s.agent_id);
        }
        let mut ws = WorldState::empty(frame, n_max);
        for (slot, s) in agents.iter().enumerate() {
            ws.positions[2 * slot] = s.x;
            ws.positions[2 * slot + 1] = s.y;
            ws.mask[slot] = true;
            ws.agent_ids[slot] = s.agent_id;
        }
        states.push(ws);
    }
    (states, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::AgentState;

    fn st(agent_id: u32, frame: u32, x: f64, y: f64) -> AgentState {
        AgentState {
            agent_id,
            frame,
            x,
            y,
        }
    }

    fn dataset(states: Vec<AgentState>) -> TrajectoryDataset {
        TrajectoryDataset::from_states("t", states, 100, 100, 0.4, 8).unwrap()
    }

    #[test]
    fn padding_and_slot_order() {
        let ds = dataset(vec![st(5, 0, 0.3, 0.4), st(2, 0, 0.1, 0.2)]);
        let (ws, warnings) = build_world_states(&ds, 3);
        assert!(warnings.is_empty());
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].positions, vec![0.1, 0.2, 0.3, 0.4, 0.0, 0.0]);
        assert_eq!(ws[0].mask, vec![true, true, false]);
        assert_eq!(ws[0].slot_of(5), Some(1));
    }

    #[test]
    fn empty_frame_is_all_zero() {
        // Agents at frames 0 and 2 leave frame 1 empty.
        let ds = dataset(vec![st(1, 0, 0.5, 0.5), st(1, 2, 0.5, 0.5)]);
        let (ws, _) = build_world_states(&ds, 2);
        assert_eq!(ws.len(), 3);
        assert_eq!(ws[1].positions, vec![0.0; 4]);
        assert_eq!(ws[1].mask, vec![false, false]);
    }

    #[test]
    fn truncation_keeps_longest_presence() {
        // Presence counts: agent 1 -> 3 frames, agent 2 -> 2, agent 3 -> 1,
        // agent 4 -> 1 (tie with 3, smaller id wins).
        let mut states = vec![
            st(1, 0, 0.1, 0.1),
            st(1, 1, 0.1, 0.1),
            st(2, 1, 0.2, 0.2),
            st(1, 2, 0.1, 0.1),
            st(2, 2, 0.2, 0.2),
            st(3, 2, 0.3, 0.3),
            st(4, 2, 0.4, 0.4),
        ];
        // Brute-force presence counts for the oracle.
        let mut counts = std::collections::BTreeMap::new();
        for s in &states {
            *counts.entry(s.agent_id).or_insert(0usize) += 1;
        }
        let mut frame2: Vec<u32> = states
            .iter()
            .filter(|s| s.frame == 2)
            .map(|s| s.agent_id)
            .collect();
        frame2.sort_by_key(|id| (std::cmp::Reverse(counts[id]), *id));
        let expected_kept: Vec<u32> = {
            let mut kept = frame2[..2].to_vec();
            kept.sort();
            kept
        };

        states.sort_by_key(|s| (s.frame, s.agent_id));
        let ds = dataset(states);
        let (ws, warnings) = build_world_states(&ds, 2);
        let kept: Vec<u32> = ws[2]
            .agent_ids
            .iter()
            .zip(&ws[2].mask)
            .filter(|(_, m)| **m)
            .map(|(id, _)| *id)
            .collect();
        assert_eq!(kept, expected_kept);
        assert_eq!(kept, vec![1, 2]);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].frame, 2);
        assert_eq!(warnings[0].dropped_agents, vec![3, 4]);
    }
}
