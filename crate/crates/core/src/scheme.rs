//! Class scheme (artery names, size groups, sides) and the anatomical
//! adjacency prior between foreground classes.
//!
//! Foreground classes have ids `1..num_classes`; the adjacency matrix is
//! indexed by `class_id - 1`. Background never takes part in adjacency.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum SizeGroup {
    Large,
    Medium,
    Small,
}

impl SizeGroup {
    pub const ALL: [SizeGroup; 3] = [SizeGroup::Large, SizeGroup::Medium, SizeGroup::Small];

    pub fn as_str(&self) -> &'static str {
        match self {
            SizeGroup::Large => "large",
            SizeGroup::Medium => "medium",
            SizeGroup::Small => "small",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    Right,
    Midline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: u16,
    pub name: String,
    #[serde(rename = "size")]
    pub size_group: SizeGroup,
    #[serde(rename = "side")]
    pub laterality: Laterality,
}

/// Foreground class table; background (id 0) is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassScheme {
    classes: Vec<ClassInfo>,
}

const COW_CLASSES: [(&str, SizeGroup, Laterality); 20] = {
    use Laterality::*;
    use SizeGroup::*;
    [
        ("L-ICA", Large, Left),
        ("R-ICA", Large, Right),
        ("BA", Large, Midline),
        ("L-ACA1", Medium, Left),
        ("R-ACA1", Medium, Right),
        ("L-ACA2", Medium, Left),
        ("R-ACA2", Medium, Right),
        ("Acom", Small, Midline),
        ("L-MCA", Medium, Left),
        ("R-MCA", Medium, Right),
        ("L-Pcom", Small, Left),
        ("R-Pcom", Small, Right),
        ("L-PCA1", Medium, Left),
        ("R-PCA1", Medium, Right),
        ("L-PCA2", Medium, Left),
        ("R-PCA2", Medium, Right),
        ("L-AChA", Small, Left),
        ("R-AChA", Small, Right),
        ("L-SCA", Medium, Left),
        ("R-SCA", Medium, Right),
    ]
};

impl ClassScheme {
    pub fn new(mut classes: Vec<ClassInfo>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("scheme needs at least one foreground class".into()));
        }
        classes.sort_by_key(|c| c.id);
        for (i, c) in classes.iter().enumerate() {
            if c.id as usize != i + 1 {
                return Err(Error::Config(format!(
                    "class ids must be contiguous from 1; found id {} at position {}",
                    c.id,
                    i + 1
                )));
            }
            if c.name.is_empty() {
                return Err(Error::Config(format!("class {} has an empty name", c.id)));
            }
            if classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Config(format!("duplicate class name `{}`", c.name)));
            }
        }
        Ok(Self { classes })
    }

    /// The 20-artery Circle of Willis scheme plus background (21 classes).
    pub fn circle_of_willis() -> Self {
        let classes = COW_CLASSES
            .iter()
            .enumerate()
            .map(|(i, &(name, size_group, laterality))| ClassInfo {
                id: (i + 1) as u16,
                name: name.to_string(),
                size_group,
                laterality,
            })
            .collect();
        Self { classes }
    }

    pub fn is_circle_of_willis(&self) -> bool {
        *self == Self::circle_of_willis()
    }

    /// Total class count including background.
    pub fn num_classes(&self) -> usize {
        self.classes.len() + 1
    }

    pub fn num_foreground(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn class(&self, id: u16) -> Option<&ClassInfo> {
        if id == 0 {
            return None;
        }
        self.classes.get(id as usize - 1)
    }

    pub fn name(&self, id: u16) -> &str {
        if id == 0 {
            "background"
        } else {
            &self.classes[id as usize - 1].name
        }
    }

    pub fn id_of(&self, name: &str) -> Result<u16> {
        self.classes
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.id)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn size_group(&self, id: u16) -> Option<SizeGroup> {
        self.class(id).map(|c| c.size_group)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ClassScheme = serde_json::from_str(text)?;
        Self::new(raw.classes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scheme serializes")
    }
}

/// Loads a scheme file `{"classes":[{"id":1,"name":..,"size":..,"side":..},..]}`.
pub fn load_scheme(path: impl AsRef<Path>) -> Result<ClassScheme> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ClassScheme::from_json(&text)
}

/// Symmetric binary adjacency between foreground classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            entries: vec![false; n * n],
        }
    }

    /// Builds from foreground-index pairs (0-based), symmetrizing.
    pub fn from_index_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(n);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::Config(format!("pair ({i}, {j}) out of range for {n} classes")));
            }
            if i == j {
                return Err(Error::Config(format!("self-pair on class index {i}")));
            }
            a.entries[i * n + j] = true;
            a.entries[j * n + i] = true;
        }
        Ok(a)
    }

    /// Builds from an explicit 0/1 matrix, which must already be symmetric
    /// with a zero diagonal.
    pub fn from_matrix(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut a = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if i == j => {
                        return Err(Error::Config(format!("nonzero diagonal at {i}")));
                    }
                    1 => a.entries[i * n + j] = true,
                    _ => return Err(Error::Config(format!("entry ({i}, {j}) is {v}, not 0/1"))),
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                if a.entries[i * n + j] != a.entries[j * n + i] {
                    return Err(Error::Config(format!("matrix is asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Adjacency of foreground indices `i`, `j` (0-based).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n + j]
    }

    /// Adjacency of class ids; background is never adjacent to anything.
    #[inline]
    pub fn classes_adjacent(&self, a: u16, b: u16) -> bool {
        if a == 0 || b == 0 || a == b {
            return false;
        }
        let (i, j) = (a as usize - 1, b as usize - 1);
        i < self.n && j < self.n && self.get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert_ne!(i, j, "adjacency diagonal is fixed at zero");
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = value;
    }

    /// Neighbors of foreground index `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    /// Unordered adjacent pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Number of ones in the off-diagonal complement, counting both orders.
    pub fn complement_count(&self) -> usize {
        let ones = self.entries.iter().filter(|&&b| b).count();
        self.n * self.n.saturating_sub(1) - ones
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }
}

const COW_BILATERAL_PAIRS: [(&str, &str); 12] = [
    ("ICA", "ACA1"),
    ("ICA", "MCA"),
    ("ICA", "Pcom"),
    ("ICA", "AChA"),
    ("ACA1", "Acom"),
    ("ACA2", "Acom"),
    ("ACA1", "ACA2"),
    ("Pcom", "PCA1"),
    ("Pcom", "PCA2"),
    ("PCA1", "PCA2"),
    ("BA", "PCA1"),
    ("BA", "SCA"),
];

const COW_CROSS_PAIRS: [(&str, &str); 2] = [("L-ACA1", "R-ACA1"), ("L-PCA1", "R-PCA1")];

fn sided(side: &str, artery: &str) -> String {
    match artery {
        "Acom" | "BA" => artery.to_string(),
        _ => format!("{side}-{artery}"),
    }
}

/// Built-in adjacency for the default 21-class scheme.
pub fn default_cow_adjacency(scheme: &ClassScheme) -> Result<AdjacencyMatrix> {
    if !scheme.is_circle_of_willis() {
        return Err(Error::NonDefaultScheme);
    }
    let mut names: Vec<(String, String)> = Vec::new();
    for side in ["L", "R"] {
        for (a, b) in COW_BILATERAL_PAIRS {
            names.push((sided(side, a), sided(side, b)));
        }
    }
    for (a, b) in COW_CROSS_PAIRS {
        names.push((a.to_string(), b.to_string()));
    }
    let pairs = names
        .iter()
        .map(|(a, b)| Ok((scheme.id_of(a)? as usize - 1, scheme.id_of(b)? as usize - 1)))
        .collect::<Result<Vec<_>>>()?;
    AdjacencyMatrix::from_index_pairs(scheme.num_foreground(), &pairs)
}

#[derive(Debug, Serialize, Deserialize)]
struct AdjacencyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<u8>>>,
}

pub fn adjacency_from_json(text: &str, scheme: &ClassScheme) -> Result<AdjacencyMatrix> {
    let file: AdjacencyFile = serde_json::from_str(text)?;
    match (file.pairs, file.matrix) {
        (Some(pairs), None) => {
            let idx = pairs
                .iter()
                .map(|[a, b]| Ok((scheme.id_of(a)? as usize - 1, scheme.id_of(b)? as usize - 1)))
                .collect::<Result<Vec<_>>>()?;
            AdjacencyMatrix::from_index_pairs(scheme.num_foreground(), &idx)
        }
        (None, Some(rows)) => {
            let a = AdjacencyMatrix::from_matrix(&rows)?;
            if a.len() != scheme.num_foreground() {
                return Err(Error::Config(format!(
                    "matrix is {0}x{0} but scheme has {1} foreground classes",
                    a.len(),
                    scheme.num_foreground()
                )));
            }
            Ok(a)
        }
        _ => Err(Error::Config(
            "adjacency file needs exactly one of `pairs` or `matrix`".into(),
        )),
    }
}

/// Serializes as an unordered pair list using class names.
pub fn adjacency_to_json(a: &AdjacencyMatrix, scheme: &ClassScheme) -> String {
    let pairs = a
        .pairs()
        .into_iter()
        .map(|(i, j)| {
            [
                scheme.name(i as u16 + 1).to_string(),
                scheme.name(j as u16 + 1).to_string(),
            ]
        })
        .collect();
    let file = AdjacencyFile {
        pairs: Some(pairs),
        matrix: None,
    };
    serde_json::to_string_pretty(&file).expect("adjacency serializes")
}

pub fn load_adjacency(path: impl AsRef<Path>, scheme: &ClassScheme) -> Result<AdjacencyMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    adjacency_from_json(&text, scheme)
}

pub fn save_adjacency(path: impl AsRef<Path>, a: &AdjacencyMatrix, scheme: &ClassScheme) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, adjacency_to_json(a, scheme)).map_err(|e| Error::io(path, e))
}
