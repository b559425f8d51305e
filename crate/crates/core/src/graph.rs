//! Communication topologies of a leader–follower platoon.
//!
//! Followers are numbered `1..=n` in text formats and `0..n` in memory; the
//! leader is node 0 of the extended graph.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{PlatoonError, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix, Scalar};

/// Undirected follower graph plus the pinning vector toward the leader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    adjacency: Vec<bool>,
    pinning: Vec<bool>,
}

/// Built-in 6-follower topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinTopology {
    /// Bidirectional path `1-2-…-6`, only vehicle 1 hears the leader.
    Bd,
    /// Leader broadcasts to 1, 2, 3; each of those relays to one tail vehicle.
    Switched,
}

impl BuiltinTopology {
    pub const FOLLOWERS: usize = 6;

    pub fn name(self) -> &'static str {
        match self {
            Self::Bd => "BD",
            Self::Switched => "Switched",
        }
    }

    pub fn topology(self) -> Topology {
        let (edges, pinning): (&[(usize, usize)], [bool; 6]) = match self {
            Self::Bd => (&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], [true, false, false, false, false, false]),
            Self::Switched => (&[(0, 3), (1, 4), (2, 5)], [true, true, true, false, false, false]),
        };
        Topology::new(Self::FOLLOWERS, edges, &pinning).expect("built-in topology is valid")
    }
}

impl FromStr for BuiltinTopology {
    type Err = PlatoonError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bd" => Ok(Self::Bd),
            "switched" => Ok(Self::Switched),
            _ => Err(PlatoonError::UnknownTopology(s.trim().to_string())),
        }
    }
}

impl Topology {
    /// Builds a topology from zero-based undirected edges and a pinning vector.
    pub fn new(n: usize, edges: &[(usize, usize)], pinning: &[bool]) -> Result<Self> {
        if n == 0 {
            return Err(PlatoonError::InvalidTopology("at least one follower required".into()));
        }
        if pinning.len() != n {
            return Err(PlatoonError::InvalidTopology(format!(
                "pinning has {} entries for {n} followers",
                pinning.len()
            )));
        }
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(PlatoonError::InvalidTopology(format!("edge ({}, {}) out of range", i + 1, j + 1)));
            }
            if i == j {
                return Err(PlatoonError::InvalidTopology(format!("self-loop at vehicle {}", i + 1)));
            }
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        Ok(Self { n, adjacency, pinning: pinning.to_vec() })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Ok(name.parse::<BuiltinTopology>()?.topology())
    }

    /// Built-in lookup that also checks the requested platoon size.
    pub fn builtin_sized(name: &str, n_followers: usize) -> Result<Self> {
        let b: BuiltinTopology = name.parse()?;
        if n_followers != BuiltinTopology::FOLLOWERS {
            return Err(PlatoonError::InvalidTopology(format!(
                "built-in `{}` has {} followers, {n_followers} requested",
                b.name(),
                BuiltinTopology::FOLLOWERS
            )));
        }
        Ok(b.topology())
    }

    pub fn n_followers(&self) -> usize {
        self.n
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinning[i]
    }

    pub fn pinning(&self) -> &[bool] {
        &self.pinning
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.connected(i, j))
    }

    /// Zero-based edge list with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.connected(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Follower-graph Laplacian `L`.
    pub fn laplacian<T: Scalar>(&self) -> Matrix<T> {
        let n = self.n;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in self.neighbors(i) {
                l[(i, j)] = -T::one();
                l[(i, i)] += T::one();
            }
        }
        l
    }

    /// `H = L + D`.
    pub fn h_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut h = self.laplacian::<T>();
        for i in 0..self.n {
            if self.pinning[i] {
                h[(i, i)] += T::one();
            }
        }
        h
    }

    /// Laplacian of the graph including the leader as node 0.
    pub fn extended_laplacian<T: Scalar>(&self) -> Matrix<T> {
        let n = self.n;
        let mut l = Matrix::zeros(n + 1, n + 1);
        let h = self.h_matrix::<T>();
        for i in 0..n {
            for j in 0..n {
                l[(i + 1, j + 1)] = h[(i, j)];
            }
            if self.pinning[i] {
                l[(0, i + 1)] = -T::one();
                l[(i + 1, 0)] = -T::one();
                l[(0, 0)] += T::one();
            }
        }
        l
    }

    /// True iff every follower can be reached from the leader.
    pub fn is_leader_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue: VecDeque<usize> = (0..self.n).filter(|&i| self.pinning[i]).collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Spectrum of `H`.
    pub fn h_spectrum<T: Scalar>(&self) -> Result<Spectrum<T>> {
        eigenvalues_symmetric(
            &self.h_matrix(),
            T::lit(crate::linalg::DEFAULT_EIGEN_TOL).max(T::epsilon()),
            MatrixTag::H,
        )
    }

    /// Spectrum of the extended Laplacian.
    pub fn extended_spectrum<T: Scalar>(&self) -> Result<Spectrum<T>> {
        eigenvalues_symmetric(
            &self.extended_laplacian(),
            T::lit(crate::linalg::DEFAULT_EIGEN_TOL).max(T::epsilon()),
            MatrixTag::ExtendedLaplacian,
        )
    }

    /// Parses the line-oriented topology text format.
    ///
    /// ```text
    /// n=3
    /// pinning=1,0,0
    /// edge 1 2
    /// edge 2 3
    /// ```
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut pinning = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            apply_topology_line(line, line_no, &mut n, &mut pinning, &mut edges)?;
        }
        build_from_parts(n, pinning, &edges, 0)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\npinning={}\n", self.n, self.pinning_string());
        for (i, j) in self.edges() {
            out.push_str(&format!("edge {} {}\n", i + 1, j + 1));
        }
        out
    }

    pub fn pinning_string(&self) -> String {
        self.pinning.iter().map(|&p| if p { "1" } else { "0" }).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(b) = [BuiltinTopology::Bd, BuiltinTopology::Switched].into_iter().find(|b| &b.topology() == self) {
            return write!(f, "{}", b.name());
        }
        write!(f, "n={} pinning={} edges=", self.n, self.pinning_string())?;
        let edges: Vec<String> = self.edges().iter().map(|(i, j)| format!("{}-{}", i + 1, j + 1)).collect();
        write!(f, "{}", edges.join(","))
    }
}

/// Consumes one line of topology text (`n=`, `pinning=`, `edge i j`).
/// Returns `Ok(false)` when the line is not a topology line.
pub(crate) fn apply_topology_line(
    line: &str,
    line_no: usize,
    n: &mut Option<usize>,
    pinning: &mut Option<Vec<bool>>,
    edges: &mut Vec<(usize, usize)>,
) -> Result<bool> {
    let err = |message: String| PlatoonError::Parse { line: line_no, message };
    if let Some(rest) = line.strip_prefix("edge") {
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(err(format!("expected `edge i j`, got `{line}`")));
        }
        let parse_idx = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| err(format!("bad vehicle index `{s}`")))?;
            if v == 0 {
                return Err(err("vehicle indices start at 1 (0 is the leader)".into()));
            }
            Ok(v - 1)
        };
        edges.push((parse_idx(parts[0])?, parse_idx(parts[1])?));
        return Ok(true);
    }
    let Some((key, value)) = line.split_once('=') else {
        return Ok(false);
    };
    match key.trim() {
        "n" => {
            let v: usize = value.trim().parse().map_err(|_| err(format!("bad follower count `{}`", value.trim())))?;
            *n = Some(v);
        }
        "pinning" => {
            let mut bits = Vec::new();
            for tok in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                bits.push(match tok {
                    "1" => true,
                    "0" => false,
                    _ => return Err(err(format!("pinning entries must be 0 or 1, got `{tok}`"))),
                });
            }
            *pinning = Some(bits);
        }
        _ => return Ok(false),
    }
    Ok(true)
}

pub(crate) fn build_from_parts(
    n: Option<usize>,
    pinning: Option<Vec<bool>>,
    edges: &[(usize, usize)],
    line_no: usize,
) -> Result<Topology> {
    let n = n.ok_or(PlatoonError::Parse { line: line_no, message: "missing `n=`".into() })?;
    let pinning = pinning.ok_or(PlatoonError::Parse { line: line_no, message: "missing `pinning=`".into() })?;
    Topology::new(n, edges, &pinning)
}

/// Which matrix a spectrum belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixTag {
    H,
    ExtendedLaplacian,
    Other,
}

/// Ascending eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub eigenvalues: Vec<T>,
    pub tag: MatrixTag,
}

impl<T: Scalar> Spectrum<T> {
    pub fn min(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> T {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Second-smallest eigenvalue (λ̄₂ for an extended Laplacian).
    pub fn second(&self) -> Option<T> {
        self.eigenvalues.get(1).copied()
    }
}

/// Symmetric eigen-decomposition (values only), ascending with multiplicity.
pub fn eigenvalues_symmetric<T: Scalar>(m: &Matrix<T>, tol: T, tag: MatrixTag) -> Result<Spectrum<T>> {
    Ok(Spectrum { eigenvalues: symmetric_eigenvalues(m, tol)?, tag })
}
