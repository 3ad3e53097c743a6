//! Planted-rule synthetic datasets.
//!
//! Every drug belongs to one of a few latent groups. A group fixes a
//! prototype for each descriptor family and a SMILES motif; drugs copy their
//! prototype with a few flipped bits. The event of an interacting pair is a
//! fixed function of the unordered pair of groups, so it is recoverable from
//! the descriptors alone.

use std::path::Path;

use anyhow::{bail, Context as _, Result};
use hmgrl::featurize::{format_drug_table, DescriptorSizes, Drug, DrugTable};
use hmgrl::graphcore::{format_ddi_triples, DdiRecord, DdiSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub drugs: usize,
    pub events: usize,
    /// Fraction of unordered drug pairs that interact.
    pub density: f64,
    pub sizes: DescriptorSizes,
    /// Latent groups; `0` picks the smallest count whose unordered group
    /// pairs cover every event.
    pub groups: usize,
    /// Probability of flipping each prototype bit.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            drugs: 60,
            events: 8,
            density: 0.28,
            sizes: DescriptorSizes {
                targets: 40,
                enzymes: 20,
                substructures: 60,
            },
            groups: 0,
            noise: 0.05,
        }
    }
}

pub struct SynthDataset {
    pub table: DrugTable,
    pub ddis: DdiSet,
    /// Latent group of every drug.
    pub groups: Vec<usize>,
}

const MOTIFS: [&str; 8] = [
    "c1ccccc1",
    "C(=O)O",
    "N1CCCC1",
    "S(=O)(=O)N",
    "C#N",
    "OCC(O)",
    "[nH]1cccc1",
    "C(F)(F)F",
];
const FILLER: &[u8] = b"CCCCNOcnoCl()=";

fn min_groups(events: usize) -> usize {
    (1..)
        .find(|g| g * (g + 1) / 2 >= events)
        .expect("unbounded search")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.drugs < 4 || cfg.events < 2 {
        bail!(
            "need at least 4 drugs and 2 events, got {} and {}",
            cfg.drugs,
            cfg.events
        );
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        bail!("density must lie in (0, 1], got {}", cfg.density);
    }
    if !(0.0..0.5).contains(&cfg.noise) {
        bail!("noise must lie in [0, 0.5), got {}", cfg.noise);
    }
    let groups = if cfg.groups == 0 {
        min_groups(cfg.events)
    } else {
        cfg.groups
    };
    if groups * (groups + 1) / 2 < cfg.events {
        bail!("{groups} groups cannot express {} events", cfg.events);
    }
    if groups > cfg.drugs {
        bail!("{groups} groups for only {} drugs", cfg.drugs);
    }
    let all_pairs = cfg.drugs * (cfg.drugs - 1) / 2;
    let count = (cfg.density * all_pairs as f64).round() as usize;
    if count < cfg.events {
        bail!(
            "density {} yields {count} interactions, fewer than {} events",
            cfg.density,
            cfg.events
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Round-robin membership keeps groups balanced.
    let mut membership: Vec<usize> = (0..cfg.drugs).map(|i| i % groups).collect();
    membership.shuffle(&mut rng);

    // Unordered group pairs; the first `events` cells get distinct events so
    // every event is reachable, the rest are drawn at random.
    let mut cells: Vec<(usize, usize)> = (0..groups)
        .flat_map(|a| (a..groups).map(move |b| (a, b)))
        .collect();
    cells.shuffle(&mut rng);
    let mut rule = vec![vec![0usize; groups]; groups];
    for (i, &(a, b)) in cells.iter().enumerate() {
        let e = if i < cfg.events {
            i
        } else {
            rng.random_range(0..cfg.events)
        };
        rule[a][b] = e;
        rule[b][a] = e;
    }

    let s = cfg.sizes;
    let prototype = |rng: &mut ChaCha8Rng, width: usize| -> Vec<bool> {
        (0..width).map(|_| rng.random_bool(0.3)).collect()
    };
    let protos: Vec<[Vec<bool>; 3]> = (0..groups)
        .map(|_| {
            [
                prototype(&mut rng, s.targets),
                prototype(&mut rng, s.enzymes),
                prototype(&mut rng, s.substructures),
            ]
        })
        .collect();
    let mut drugs = Vec::with_capacity(cfg.drugs);
    for (i, &g) in membership.iter().enumerate() {
        let mut noisy = |bits: &[bool]| -> Vec<usize> {
            bits.iter()
                .enumerate()
                .filter(|&(_, &b)| b ^ rng.random_bool(cfg.noise))
                .map(|(j, _)| j)
                .collect()
        };
        let targets = noisy(&protos[g][0]);
        let enzymes = noisy(&protos[g][1]);
        let substructures = noisy(&protos[g][2]);
        let mut smiles = String::from(MOTIFS[g % MOTIFS.len()]);
        for _ in 0..rng.random_range(6..40) {
            smiles.push(FILLER[rng.random_range(0..FILLER.len())] as char);
        }
        drugs.push(Drug {
            id: format!("SYN{i:04}"),
            smiles,
            targets,
            enzymes,
            substructures,
        });
    }
    let table = DrugTable::new(s, drugs)?;

    let mut pairs: Vec<(usize, usize)> = (0..cfg.drugs)
        .flat_map(|a| (a + 1..cfg.drugs).map(move |b| (a, b)))
        .collect();
    pairs.shuffle(&mut rng);
    let mut records: Vec<DdiRecord> = Vec::with_capacity(count);
    let mut used = std::collections::HashSet::new();
    let mut covered = vec![false; cfg.events];
    // Seed one interaction per event first, then fill to the target count.
    for &(a, b) in &pairs {
        let e = rule[membership[a]][membership[b]];
        if !covered[e] {
            covered[e] = true;
            used.insert((a, b));
            records.push(DdiRecord { a, b, event: e });
        }
    }
    if covered.iter().any(|c| !c) {
        bail!("groups are too small to realize every event; use more drugs");
    }
    for &(a, b) in &pairs {
        if records.len() >= count {
            break;
        }
        let e = rule[membership[a]][membership[b]];
        if used.insert((a, b)) {
            records.push(DdiRecord { a, b, event: e });
        }
    }
    for r in &mut records {
        if rng.random_bool(0.5) {
            std::mem::swap(&mut r.a, &mut r.b);
        }
    }
    let ddis = DdiSet::new(records, cfg.drugs)?;
    Ok(SynthDataset {
        table,
        ddis,
        groups: membership,
    })
}

/// Writes `drugs.tsv` and `ddis.tsv` under `dir`.
pub fn write(dataset: &SynthDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("drugs.tsv"), format_drug_table(&dataset.table))?;
    std::fs::write(
        dir.join("ddis.tsv"),
        format_ddi_triples(dataset.ddis.records(), &dataset.table),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmgrl::featurize::parse_drug_table;
    use hmgrl::graphcore::parse_ddi_triples;

    #[test]
    fn default_dataset_is_well_formed_and_round_trips() {
        let ds = generate(&SynthConfig::default()).unwrap();
        assert_eq!(ds.table.len(), 60);
        assert_eq!(ds.ddis.num_events(), 8);
        assert!((480..=520).contains(&ds.ddis.len()), "{}", ds.ddis.len());
        let drugs = format_drug_table(&ds.table);
        let table = parse_drug_table(Path::new("drugs.tsv"), &drugs).unwrap();
        assert_eq!(format_drug_table(&table), drugs);
        let ddis = format_ddi_triples(ds.ddis.records(), &ds.table);
        let parsed = parse_ddi_triples(Path::new("ddis.tsv"), &ddis, &table).unwrap();
        assert_eq!(parsed, ds.ddis);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write(&generate(&SynthConfig::default()).unwrap(), a.path()).unwrap();
        write(&generate(&SynthConfig::default()).unwrap(), b.path()).unwrap();
        for f in ["drugs.tsv", "ddis.tsv"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        let other = generate(&SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_ne!(
            format_drug_table(&other.table),
            std::fs::read_to_string(a.path().join("drugs.tsv")).unwrap()
        );
    }

    #[test]
    fn events_follow_the_planted_rule() {
        let ds = generate(&SynthConfig::default()).unwrap();
        let mut rule = std::collections::HashMap::new();
        for r in ds.ddis.records() {
            let (g, h) = (ds.groups[r.a], ds.groups[r.b]);
            let key = (g.min(h), g.max(h));
            assert_eq!(*rule.entry(key).or_insert(r.event), r.event);
        }
    }

    #[test]
    fn infeasible_requests_are_rejected() {
        let bad = [
            SynthConfig {
                drugs: 3,
                ..SynthConfig::default()
            },
            SynthConfig {
                events: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                density: 0.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                density: 1.5,
                ..SynthConfig::default()
            },
            SynthConfig {
                drugs: 5,
                density: 0.2,
                ..SynthConfig::default()
            },
            SynthConfig {
                groups: 2,
                ..SynthConfig::default()
            },
        ];
        for cfg in bad {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }
}
