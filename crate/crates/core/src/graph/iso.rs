use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{DefaultHasher, Hash, Hasher};

use super::term::{Term, Triple};
use super::{Graph, GraphError};

/// Combined blank-node count beyond which [`isomorphic`] refuses to search.
pub const MAX_BLANK_NODES: usize = 64;

fn blank_nodes(graph: &Graph) -> BTreeSet<&Term> {
    graph
        .iter()
        .flat_map(|t| [&t.subject, &t.object])
        .filter(|t| t.is_blank())
        .collect()
}

/// Colour refinement: a blank node's colour summarizes its ground
/// neighbourhood and the colours of blank neighbours.
fn colours<'a>(graph: &'a Graph, nodes: &BTreeSet<&'a Term>) -> HashMap<&'a Term, String> {
    let mut colour: HashMap<&Term, String> = nodes.iter().map(|n| (*n, String::new())).collect();
    let render = |t: &Term, colour: &HashMap<&Term, String>| {
        if t.is_blank() {
            format!("_[{}]", colour[t])
        } else {
            t.to_ntriples()
        }
    };
    for _ in 0..4 {
        let mut next = HashMap::new();
        for node in nodes {
            let mut signature: Vec<String> = graph
                .iter()
                .filter_map(|t| {
                    if t.subject == **node {
                        Some(format!("out {} {}", t.predicate, render(&t.object, &colour)))
                    } else if t.object == **node {
                        Some(format!("in {} {}", t.predicate, render(&t.subject, &colour)))
                    } else {
                        None
                    }
                })
                .collect();
            signature.sort();
            let mut hasher = DefaultHasher::new();
            signature.hash(&mut hasher);
            next.insert(*node, format!("{:016x}", hasher.finish()));
        }
        colour = next;
    }
    colour
}

fn map_term(term: &Term, mapping: &HashMap<&Term, &Term>) -> Option<Term> {
    if term.is_blank() {
        mapping.get(term).map(|t| (*t).clone())
    } else {
        Some(term.clone())
    }
}

struct Search<'a> {
    left: &'a Graph,
    right: &'a Graph,
    order: Vec<&'a Term>,
    candidates: HashMap<&'a Term, Vec<&'a Term>>,
    blank_triples: HashMap<&'a Term, Vec<&'a Triple>>,
}

impl<'a> Search<'a> {
    fn consistent(&self, node: &Term, mapping: &HashMap<&'a Term, &'a Term>) -> bool {
        self.blank_triples[node].iter().all(|t| {
            match (map_term(&t.subject, mapping), map_term(&t.object, mapping)) {
                (Some(s), Some(o)) => self.right.contains(&Triple {
                    subject: s,
                    predicate: t.predicate.clone(),
                    object: o,
                }),
                _ => true,
            }
        })
    }

    fn extend(
        &self,
        depth: usize,
        mapping: &mut HashMap<&'a Term, &'a Term>,
        used: &mut BTreeSet<&'a Term>,
    ) -> bool {
        let Some(&node) = self.order.get(depth) else {
            return self.left.iter().all(|t| {
                let s = map_term(&t.subject, mapping).expect("complete mapping");
                let o = map_term(&t.object, mapping).expect("complete mapping");
                self.right.contains(&Triple { subject: s, predicate: t.predicate.clone(), object: o })
            });
        };
        for &candidate in &self.candidates[node] {
            if used.contains(candidate) {
                continue;
            }
            mapping.insert(node, candidate);
            used.insert(candidate);
            if self.consistent(node, mapping) && self.extend(depth + 1, mapping, used) {
                return true;
            }
            mapping.remove(node);
            used.remove(candidate);
        }
        false
    }
}

/// True iff some bijection between blank nodes maps `left` onto `right`.
pub fn isomorphic(left: &Graph, right: &Graph) -> Result<bool, GraphError> {
    let left_blanks = blank_nodes(left);
    let right_blanks = blank_nodes(right);
    let count = left_blanks.len() + right_blanks.len();
    if count > MAX_BLANK_NODES {
        return Err(GraphError::BlankNodeBound { count, limit: MAX_BLANK_NODES });
    }
    if left.len() != right.len() || left_blanks.len() != right_blanks.len() {
        return Ok(false);
    }
    let left_ground: BTreeSet<&Triple> =
        left.iter().filter(|t| !t.subject.is_blank() && !t.object.is_blank()).collect();
    let right_ground: BTreeSet<&Triple> =
        right.iter().filter(|t| !t.subject.is_blank() && !t.object.is_blank()).collect();
    if left_ground != right_ground {
        return Ok(false);
    }
    if left_blanks.is_empty() {
        return Ok(true);
    }

    let left_colours = colours(left, &left_blanks);
    let right_colours = colours(right, &right_blanks);
    let mut histogram_l: BTreeMap<&String, usize> = BTreeMap::new();
    let mut histogram_r: BTreeMap<&String, usize> = BTreeMap::new();
    for c in left_colours.values() {
        *histogram_l.entry(c).or_default() += 1;
    }
    for c in right_colours.values() {
        *histogram_r.entry(c).or_default() += 1;
    }
    if histogram_l != histogram_r {
        return Ok(false);
    }

    let candidates: HashMap<&Term, Vec<&Term>> = left_blanks
        .iter()
        .map(|l| {
            let matching = right_blanks
                .iter()
                .copied()
                .filter(|r| right_colours[r] == left_colours[l])
                .collect();
            (*l, matching)
        })
        .collect();
    let mut order: Vec<&Term> = left_blanks.iter().copied().collect();
    order.sort_by_key(|n| candidates[n].len());
    let mut blank_triples: HashMap<&Term, Vec<&Triple>> = HashMap::new();
    for triple in left.iter() {
        for node in [&triple.subject, &triple.object] {
            if node.is_blank() {
                blank_triples.entry(node).or_default().push(triple);
            }
        }
    }
    let search = Search { left, right, order, candidates, blank_triples };
    Ok(search.extend(0, &mut HashMap::new(), &mut BTreeSet::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_ntriples;

    #[test]
    fn identical_graphs() {
        let g = parse_ntriples("_:a <urn:p> _:b .\n_:b <urn:p> \"x\" .\n").unwrap();
        assert!(isomorphic(&g, &g).unwrap());
    }

    #[test]
    fn permuted_blank_ids() {
        let g1 = parse_ntriples("_:a <urn:p> _:b .\n_:b <urn:q> \"x\" .\n_:c <urn:p> _:a .\n").unwrap();
        let g2 = parse_ntriples("_:z <urn:p> _:y .\n_:y <urn:q> \"x\" .\n_:w <urn:p> _:z .\n").unwrap();
        assert!(isomorphic(&g1, &g2).unwrap());
        let g3 = parse_ntriples("_:z <urn:p> _:y .\n_:z <urn:q> \"x\" .\n_:w <urn:p> _:z .\n").unwrap();
        assert!(!isomorphic(&g1, &g3).unwrap());
    }

    #[test]
    fn language_tag_difference() {
        let g1 = parse_ntriples("<urn:a> <urn:p> \"x\"@de .").unwrap();
        let g2 = parse_ntriples("<urn:a> <urn:p> \"x\"@en .").unwrap();
        assert!(!isomorphic(&g1, &g2).unwrap());
    }

    #[test]
    fn symmetric_structures_need_backtracking() {
        // Two 2-cycles vs one 4-cycle: equal colours, not isomorphic.
        let g1 = parse_ntriples("_:a <urn:p> _:b .\n_:b <urn:p> _:a .\n_:c <urn:p> _:d .\n_:d <urn:p> _:c .\n").unwrap();
        let g2 = parse_ntriples("_:a <urn:p> _:b .\n_:b <urn:p> _:c .\n_:c <urn:p> _:d .\n_:d <urn:p> _:a .\n").unwrap();
        assert!(!isomorphic(&g1, &g2).unwrap());
        let g3 = parse_ntriples("_:x <urn:p> _:y .\n_:y <urn:p> _:x .\n_:u <urn:p> _:v .\n_:v <urn:p> _:u .\n").unwrap();
        assert!(isomorphic(&g1, &g3).unwrap());
    }

    #[test]
    fn bound_exceeded() {
        let text: String = (0..40).map(|i| format!("_:n{i} <urn:p> \"{i}\" .\n")).collect();
        let g = parse_ntriples(&text).unwrap();
        assert!(matches!(isomorphic(&g, &g), Err(GraphError::BlankNodeBound { count: 80, .. })));
    }
}
