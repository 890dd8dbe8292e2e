use std::collections::BTreeMap;

use crate::proto::{Prototype, PrototypeSet};

/// Support-weighted mean per `(class, hop)` over the clients that uploaded
/// it. Pairs nobody uploaded are absent from the result.
pub fn naive_global_aggregate<'a>(uploads: impl IntoIterator<Item = &'a PrototypeSet>) -> PrototypeSet {
    let mut groups: BTreeMap<(usize, usize), Vec<&Prototype>> = BTreeMap::new();
    for set in uploads {
        for p in set.iter() {
            groups.entry((p.class, p.hop)).or_default().push(p);
        }
    }
    groups
        .into_iter()
        .map(|((class, hop), members)| {
            let total: usize = members.iter().map(|p| p.support).sum();
            let mut vector = vec![0.0; members[0].vector.len()];
            for p in &members {
                let w = p.support as f64 / total as f64;
                for (acc, x) in vector.iter_mut().zip(&p.vector) {
                    *acc += w * x;
                }
            }
            Prototype {
                class,
                hop,
                vector,
                support: total,
            }
        })
        .collect()
}
