#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use mknn_cbir::evalharness::Lcg64;
use mknn_cbir::features::ExtractionParams;
use mknn_cbir::store::{EntryLabel, ImageIndex, IndexEntry};

/// Brute-force reference classifier: full distance sort for every sample,
/// label-match counting for validity, `validity * 1/(d + 0.5)` votes.
pub mod oracle {
    #[derive(Debug, Clone)]
    pub struct Point {
        pub id: String,
        pub x: Vec<f64>,
        pub label: String,
    }

    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += (a[i] - b[i]) * (a[i] - b[i]);
        }
        s.sqrt()
    }

    /// All points except `skip`, as (distance, id, position), fully sorted.
    fn sorted_by_distance(
        points: &[Point],
        q: &[f64],
        skip: Option<usize>,
    ) -> Vec<(f64, String, usize)> {
        let mut all = Vec::new();
        for (j, p) in points.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            all.push((distance(&p.x, q), p.id.clone(), j));
        }
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all
    }

    pub fn validities(points: &[Point], h: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..points.len() {
            let neighbors = sorted_by_distance(points, &points[i].x, Some(i));
            let mut same = 0;
            for (_, _, j) in neighbors.iter().take(h) {
                if points[*j].label == points[i].label {
                    same += 1;
                }
            }
            out.push(same as f64 / h as f64);
        }
        out
    }

    fn vote(points: &[Point], weights: &[(usize, f64)]) -> String {
        let mut labels: Vec<&String> = weights.iter().map(|(j, _)| &points[*j].label).collect();
        labels.sort();
        labels.dedup();
        let mut best: Option<(&String, f64)> = None;
        for l in labels {
            let mut total = 0.0;
            for (j, w) in weights {
                if points[*j].label == *l {
                    total += w;
                }
            }
            // strictly greater keeps the smallest label on ties
            if best.is_none() || total > best.unwrap().1 {
                best = Some((l, total));
            }
        }
        best.unwrap().0.clone()
    }

    pub fn mknn(points: &[Point], validity: &[f64], q: &[f64], k: usize) -> String {
        let neighbors = sorted_by_distance(points, q, None);
        let weights: Vec<(usize, f64)> = neighbors
            .iter()
            .take(k)
            .map(|(d, _, j)| (*j, validity[*j] * (1.0 / (d + 0.5))))
            .collect();
        vote(points, &weights)
    }

    pub fn knn(points: &[Point], q: &[f64], k: usize) -> String {
        let neighbors = sorted_by_distance(points, q, None);
        let weights: Vec<(usize, f64)> = neighbors
            .iter()
            .take(k)
            .map(|(_, _, j)| (*j, 1.0))
            .collect();
        vote(points, &weights)
    }

    /// Distance-weighted KNN with `1/(d + 0.5)` votes and no validity.
    pub fn weighted_knn(points: &[Point], q: &[f64], k: usize) -> String {
        let neighbors = sorted_by_distance(points, q, None);
        let weights: Vec<(usize, f64)> = neighbors
            .iter()
            .take(k)
            .map(|(d, _, j)| (*j, 1.0 / (d + 0.5)))
            .collect();
        vote(points, &weights)
    }
}

pub fn to_samples(points: &[oracle::Point]) -> Vec<mknn_cbir::TrainSample> {
    points
        .iter()
        .map(|p| mknn_cbir::TrainSample::new(p.id.clone(), p.x.clone(), p.label.clone()))
        .collect()
}

/// Random small labeled dataset. Coordinates come either from a continuous
/// range or a coarse integer grid (to produce distance ties).
pub fn random_dataset(rng: &mut Lcg64, n: usize, dim: usize, classes: usize) -> Vec<oracle::Point> {
    let grid = rng.below(2) == 0;
    (0..n)
        .map(|i| {
            let x = (0..dim)
                .map(|_| {
                    if grid {
                        rng.below(4) as f64
                    } else {
                        rng.next_f64() * 10.0 - 5.0
                    }
                })
                .collect();
            let label = ["A", "B", "C"][rng.below(classes)].to_string();
            oracle::Point {
                id: format!("s{:02}", rng.below(1000) * 100 + i),
                x,
                label,
            }
        })
        .collect()
}

pub fn random_query(rng: &mut Lcg64, points: &[oracle::Point], dim: usize) -> Vec<f64> {
    match rng.below(3) {
        0 => points[rng.below(points.len())].x.clone(),
        1 => (0..dim).map(|_| rng.below(4) as f64).collect(),
        _ => (0..dim).map(|_| rng.next_f64() * 10.0 - 5.0).collect(),
    }
}

const RED: [u8; 3] = [220, 40, 40];
const GREEN: [u8; 3] = [40, 200, 60];
const BLUE: [u8; 3] = [50, 60, 210];
const WHITE: [u8; 3] = [255, 255, 255];
const BLACK: [u8; 3] = [0, 0, 0];
const GRAY: [u8; 3] = [128, 128, 128];

/// The 12-image corpus: (file, base color, base pixel count, accent color)
/// on a 4x4 canvas. Mirrored in tests/fixtures/derive_fixture_values.py.
pub const CORPUS: [(&str, [u8; 3], usize, [u8; 3]); 12] = [
    ("r1.png", RED, 16, WHITE),
    ("r2.png", RED, 12, WHITE),
    ("r3.png", RED, 8, GREEN),
    ("r4.png", RED, 14, BLACK),
    ("g1.png", GREEN, 16, WHITE),
    ("g2.png", GREEN, 10, RED),
    ("g3.png", GREEN, 12, BLACK),
    ("g4.png", GREEN, 15, WHITE),
    ("b1.png", BLUE, 16, WHITE),
    ("b2.png", BLUE, 11, GRAY),
    ("b3.png", BLUE, 8, GREEN),
    ("b4.png", BLUE, 13, WHITE),
];

pub fn corpus_label(id: &str) -> &'static str {
    match id.as_bytes()[0] {
        b'r' => "red",
        b'g' => "green",
        _ => "blue",
    }
}

pub fn fixture_image(base: [u8; 3], n: usize, accent: [u8; 3]) -> RgbImage {
    let mut img = RgbImage::new(4, 4);
    for (i, p) in img.pixels_mut().enumerate() {
        *p = Rgb(if i < n { base } else { accent });
    }
    img
}

/// Writes the corpus PNGs plus `labels_partial.tsv` (r4 and b4 unlabeled)
/// and `labels_full.tsv` next to (not inside) the image directory.
pub fn write_corpus(root: &Path) -> std::path::PathBuf {
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    for (name, base, n, accent) in CORPUS {
        fixture_image(base, n, accent)
            .save(images.join(name))
            .unwrap();
    }
    let mut partial = String::from("# fixture labels\n");
    let mut full = String::new();
    for (name, ..) in CORPUS {
        let line = format!("{name}\t{}\n", corpus_label(name));
        if name != "r4.png" && name != "b4.png" {
            partial.push_str(&line);
        }
        full.push_str(&line);
    }
    std::fs::write(root.join("labels_partial.tsv"), partial).unwrap();
    std::fs::write(root.join("labels_full.tsv"), full).unwrap();
    images
}

/// Expected top-3 rankings (query excluded) and per-query measures for the
/// corpus: (query, ranking, retrieved relevant, recall, precision, fallout).
pub type Top3Case = (&'static str, [&'static str; 3], u64, f64, f64, f64);

pub const EXPECTED_TOP3: [Top3Case; 12] = [
    ("b1.png", ["b4.png", "b2.png", "b3.png"], 3, 1.0, 1.0, 0.0),
    ("b2.png", ["b4.png", "b1.png", "b3.png"], 3, 1.0, 1.0, 0.0),
    (
        "b3.png",
        ["g3.png", "b2.png", "b4.png"],
        2,
        2.0 / 3.0,
        2.0 / 3.0,
        0.125,
    ),
    ("b4.png", ["b1.png", "b2.png", "b3.png"], 3, 1.0, 1.0, 0.0),
    ("g1.png", ["g4.png", "g3.png", "g2.png"], 3, 1.0, 1.0, 0.0),
    (
        "g2.png",
        ["r3.png", "g3.png", "g4.png"],
        2,
        2.0 / 3.0,
        2.0 / 3.0,
        0.125,
    ),
    ("g3.png", ["g4.png", "g1.png", "g2.png"], 3, 1.0, 1.0, 0.0),
    ("g4.png", ["g1.png", "g3.png", "g2.png"], 3, 1.0, 1.0, 0.0),
    ("r1.png", ["r4.png", "r2.png", "r3.png"], 3, 1.0, 1.0, 0.0),
    ("r2.png", ["r4.png", "r1.png", "r3.png"], 3, 1.0, 1.0, 0.0),
    (
        "r3.png",
        ["g2.png", "g3.png", "r2.png"],
        1,
        1.0 / 3.0,
        1.0 / 3.0,
        0.25,
    ),
    ("r4.png", ["r1.png", "r2.png", "r3.png"], 3, 1.0, 1.0, 0.0),
];
pub const EXPECTED_MACRO: (f64, f64, f64) = (8.0 / 9.0, 8.0 / 9.0, 1.0 / 24.0);

/// Two well-separated Gaussian clusters in a 6-value (2 bins per channel)
/// feature space, 20 labeled and 10 unlabeled entries per cluster. Returns
/// the index and each unlabeled id's generating cluster.
pub fn two_cluster_index(seed: u64) -> (ImageIndex, BTreeMap<String, String>) {
    let params = ExtractionParams::new(2).unwrap();
    let centers = [
        ("warm", [0.8, 0.2, 0.3, 0.7, 0.3, 0.7]),
        ("cool", [0.2, 0.8, 0.7, 0.3, 0.7, 0.3]),
    ];
    let mut rng = Lcg64::new(seed);
    let mut entries = Vec::new();
    let mut truth = BTreeMap::new();
    for (label, center) in centers {
        for i in 0..30 {
            let v = center
                .iter()
                .map(|c| (c + 0.03 * rng.next_gaussian()).max(0.0))
                .collect();
            let id = format!("{label}-{i:02}.png");
            let entry_label = if i < 20 {
                Some(EntryLabel::original(label))
            } else {
                truth.insert(id.clone(), label.to_string());
                None
            };
            entries.push(IndexEntry::new(id, v, entry_label));
        }
    }
    (ImageIndex::new(params, entries).unwrap(), truth)
}
