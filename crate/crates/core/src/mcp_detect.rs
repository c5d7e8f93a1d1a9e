//! Multi-circuit pole detection and grouping by circuit configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::association::AssociationTable;
use crate::geometry::Point2D;
use crate::ingest::PoleSet;

/// Sorted, de-duplicated, non-empty set of circuit ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CircuitSet(Vec<String>);

impl CircuitSet {
    /// Trims each id, drops empties, sorts and de-duplicates. `None` when
    /// nothing is left.
    pub fn new<I, S>(ids: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v: Vec<String> = ids
            .into_iter()
            .map(|s| s.as_ref().trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        v.sort();
        v.dedup();
        (!v.is_empty()).then_some(CircuitSet(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.0
    }

    pub fn is_superset_of(&self, other: &CircuitSet) -> bool {
        // both sorted: merge walk
        let mut mine = self.0.iter();
        'outer: for want in &other.0 {
            for have in mine.by_ref() {
                if have == want {
                    continue 'outer;
                }
                if have > want {
                    return false;
                }
            }
            return false;
        }
        true
    }
}

impl fmt::Display for CircuitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McpPole {
    /// Ordinal into the [`PoleSet`].
    pub pole: usize,
    pub pole_id: String,
    pub location: Point2D,
    pub circuits: CircuitSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McpGroup {
    pub key: CircuitSet,
    pub members: Vec<McpPole>,
}

/// How MCPs are grouped before spatial clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// One group per distinct circuit set; a pole belongs to exactly one group.
    #[default]
    Exact,
    /// One group per distinct circuit set observed, containing every MCP whose
    /// set is a superset of it. Poles may appear in several groups.
    Overlap,
}

impl FromStr for Grouping {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Grouping::Exact),
            "overlap" => Ok(Grouping::Overlap),
            other => Err(format!("unknown grouping `{other}` (expected exact or overlap)")),
        }
    }
}

/// Poles whose attachments span more than one distinct circuit, in pole
/// ordinal order.
pub fn detect_mcp(assoc: &AssociationTable, poles: &PoleSet) -> Vec<McpPole> {
    assoc
        .rows()
        .iter()
        .enumerate()
        .filter_map(|(ordinal, row)| {
            let circuits = CircuitSet::new(row.iter().map(|a| a.circuit_id.as_str()))?;
            (circuits.len() > 1).then(|| {
                let pole = &poles.poles()[ordinal];
                McpPole {
                    pole: ordinal,
                    pole_id: pole.pole_id.clone(),
                    location: pole.location,
                    circuits,
                }
            })
        })
        .collect()
}

/// Groups MCPs by circuit configuration. Groups are ordered by key and
/// members keep their input order.
pub fn group_by_configuration(mcps: &[McpPole], grouping: Grouping) -> Vec<McpGroup> {
    let mut groups: BTreeMap<&CircuitSet, Vec<McpPole>> = BTreeMap::new();
    match grouping {
        Grouping::Exact => {
            for m in mcps {
                groups.entry(&m.circuits).or_default().push(m.clone());
            }
        }
        Grouping::Overlap => {
            for m in mcps {
                groups.entry(&m.circuits).or_default();
            }
            for (key, members) in groups.iter_mut() {
                members.extend(mcps.iter().filter(|m| m.circuits.is_superset_of(key)).cloned());
            }
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| McpGroup {
            key: key.clone(),
            members,
        })
        .collect()
}

/// Writes `pole_id,circuit_set` for every detected MCP.
pub fn write_mcp_csv(mcps: &[McpPole], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pole_id", "circuit_set"])?;
    for m in mcps {
        w.write_record([m.pole_id.as_str(), &m.circuits.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{associate, AssociationOptions};
    use crate::geometry::Polyline;
    use crate::ingest::{Pole, WireSegment, WireSet};
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashSet};

    fn set(ids: &[&str]) -> CircuitSet {
        CircuitSet::new(ids).unwrap()
    }

    fn mcp(pole: usize, ids: &[&str]) -> McpPole {
        McpPole {
            pole,
            pole_id: format!("P{pole}"),
            location: Point2D::new(pole as f64, 0.0),
            circuits: set(ids),
        }
    }

    #[test]
    fn circuit_set_normalizes() {
        assert_eq!(set(&["B", " A", "A ", "B"]).ids(), ["A", "B"]);
        assert!(CircuitSet::new(["", "  "]).is_none());
        assert!(set(&["A", "B", "C"]).is_superset_of(&set(&["A", "C"])));
        assert!(!set(&["A", "C"]).is_superset_of(&set(&["A", "B"])));
        assert!(!set(&["A"]).is_superset_of(&set(&["A", "B"])));
        assert_eq!(set(&["B", "A"]).to_string(), "A;B");
    }

    fn territory(circuits_per_pole: &[&[&str]]) -> (PoleSet, WireSet) {
        let mut poles = Vec::new();
        let mut wires = Vec::new();
        for (i, ckts) in circuits_per_pole.iter().enumerate() {
            let x = i as f64 * 1000.0;
            poles.push(Pole {
                pole_id: format!("P{i}"),
                location: Point2D::new(x, 0.0),
                metadata: Default::default(),
            });
            for (j, c) in ckts.iter().enumerate() {
                let y = 5.0 + j as f64;
                let g = Polyline::new(vec![Point2D::new(x - 3.0, y), Point2D::new(x + 3.0, y)]).unwrap();
                wires.push(WireSegment {
                    wire_id: format!("W{i}-{j}"),
                    circuit_id: c.to_string(),
                    length: g.arc_length(),
                    geometry: g,
                    ampacity: None,
                    declared_pole_ids: None,
                });
            }
        }
        (PoleSet::new(poles).unwrap(), WireSet::new(wires).unwrap())
    }

    #[test]
    fn detection_counts_unique_circuits() {
        let (poles, wires) = territory(&[&["A", "A", "B"], &["A", "A"], &[], &["C", "D"]]);
        let assoc = associate(&poles, &wires, &AssociationOptions::default()).unwrap();
        let mcps = detect_mcp(&assoc, &poles);
        assert_eq!(mcps.len(), 2);
        assert_eq!(mcps[0].pole_id, "P0");
        assert_eq!(mcps[0].circuits, set(&["A", "B"]));
        assert_eq!(mcps[1].circuits, set(&["C", "D"]));
    }

    #[test]
    fn exact_grouping() {
        let groups = group_by_configuration(
            &[mcp(0, &["A", "B"]), mcp(1, &["A", "C"]), mcp(2, &["A", "B"])],
            Grouping::Exact,
        );
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].key, set(&["A", "B"]));
        assert_eq!(groups[0].members.len(), 2);
        assert_eq!(groups[1].members.len(), 1);
        assert!(group_by_configuration(&[], Grouping::Exact).is_empty());
    }

    #[test]
    fn overlap_grouping_admits_supersets() {
        let groups = group_by_configuration(
            &[mcp(0, &["A", "B"]), mcp(1, &["A", "B", "C"]), mcp(2, &["C", "D"])],
            Grouping::Overlap,
        );
        let keys: Vec<String> = groups.iter().map(|g| g.key.to_string()).collect();
        assert_eq!(keys, ["A;B", "A;B;C", "C;D"]);
        let ab: Vec<usize> = groups[0].members.iter().map(|m| m.pole).collect();
        assert_eq!(ab, [0, 1]);
        assert_eq!(groups[1].members.len(), 1);
    }

    fn arb_mcps() -> impl Strategy<Value = Vec<McpPole>> {
        let names = ["A", "B", "C", "D", "E"];
        prop::collection::vec(prop::sample::subsequence(names.to_vec(), 2..=4), 0..80).prop_map(|sets| {
            sets.iter()
                .enumerate()
                .map(|(i, s)| mcp(i, s))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn exact_grouping_is_a_partition(mcps in arb_mcps()) {
            let groups = group_by_configuration(&mcps, Grouping::Exact);
            let mut seen = HashSet::new();
            for g in &groups {
                for m in &g.members {
                    prop_assert_eq!(&m.circuits, &g.key);
                    prop_assert!(seen.insert(m.pole));
                }
            }
            prop_assert_eq!(seen.len(), mcps.len());
            prop_assert!(groups.windows(2).all(|w| w[0].key < w[1].key));
        }

        #[test]
        fn detection_matches_recount(assign in prop::collection::vec(prop::collection::vec(0usize..4, 0..4), 1..30)) {
            let names = ["A", "B", "C", "D"];
            let spec: Vec<Vec<&str>> = assign.iter().map(|v| v.iter().map(|&i| names[i]).collect()).collect();
            let refs: Vec<&[&str]> = spec.iter().map(|v| v.as_slice()).collect();
            let (poles, wires) = territory(&refs);
            prop_assume!(!wires.is_empty());
            let assoc = associate(&poles, &wires, &AssociationOptions::default()).unwrap();
            let mcps = detect_mcp(&assoc, &poles);
            // recount: distinct circuits among the (≤ 3 nearest) attached wires
            let expected: Vec<usize> = assoc.rows().iter().enumerate()
                .filter(|(_, row)| row.iter().map(|a| &a.circuit_id).collect::<BTreeSet<_>>().len() > 1)
                .map(|(i, _)| i)
                .collect();
            let got: Vec<usize> = mcps.iter().map(|m| m.pole).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
