//! Uniform simplicial meshes and P1 fields.
//!
//! A [`Mesh`] is either a uniform partition of `(0, L)` into segments or a
//! uniform rectangular grid on `(0, lx) × (0, ly)` where each square is split
//! into two triangles along the lower-left to upper-right diagonal. Scalar
//! fields are nodal (continuous piecewise linear); vector fields carry one
//! constant vector per cell, which is exactly what the gradient of a P1 field
//! looks like.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A discretized domain together with the data every assembly loop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    extent: [f64; 2],
    resolution: [usize; 2],
    nodes: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    cell_volume: Vec<f64>,
    /// Gradients of the nodal basis functions restricted to each cell, in
    /// the same local order as `cells`.
    basis_grads: Vec<[[f64; 2]; 3]>,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

impl Mesh {
    /// Uniform mesh of `(0, length)` with `n_cells` segments.
    pub fn interval(n_cells: usize, length: f64) -> Result<Arc<Mesh>> {
        if n_cells == 0 {
            return Err(Error::InvalidMesh("need at least one cell".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "length must be positive, got {length}"
            )));
        }
        let h = length / n_cells as f64;
        let nodes = (0..=n_cells)
            .map(|i| {
                let x = if i == n_cells { length } else { i as f64 * h };
                [x, 0.0]
            })
            .collect();
        let cells = (0..n_cells).map(|i| [i, i + 1, usize::MAX]).collect();
        let boundary = vec![0, n_cells];
        Ok(Arc::new(Mesh::assemble(
            1,
            [length, 0.0],
            [n_cells, 0],
            nodes,
            cells,
            boundary,
        )))
    }

    /// Uniform triangulation of the rectangle `(0, lx) × (0, ly)` with
    /// `2·nx·ny` triangles. Nodes are numbered row by row from the origin.
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Arc<Mesh>> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(
                "need at least one subdivision per axis".into(),
            ));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "extents must be positive, got {lx} × {ly}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let coord = |i: usize, n: usize, h: f64, l: f64| if i == n { l } else { i as f64 * h };
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([coord(i, nx, hx, lx), coord(j, ny, hy, ly)]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let ll = id(i, j);
                let lr = id(i + 1, j);
                let ul = id(i, j + 1);
                let ur = id(i + 1, j + 1);
                cells.push([ll, lr, ur]);
                cells.push([ll, ur, ul]);
            }
        }
        let mut boundary = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                if i == 0 || j == 0 || i == nx || j == ny {
                    boundary.push(id(i, j));
                }
            }
        }
        Ok(Arc::new(Mesh::assemble(
            2,
            [lx, ly],
            [nx, ny],
            nodes,
            cells,
            boundary,
        )))
    }

    fn assemble(
        dim: usize,
        extent: [f64; 2],
        resolution: [usize; 2],
        nodes: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        boundary_nodes: Vec<usize>,
    ) -> Mesh {
        let mut cell_volume = Vec::with_capacity(cells.len());
        let mut basis_grads = Vec::with_capacity(cells.len());
        for cell in &cells {
            if dim == 1 {
                let h = nodes[cell[1]][0] - nodes[cell[0]][0];
                cell_volume.push(h);
                basis_grads.push([[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]]);
            } else {
                let [a, b, c] = [nodes[cell[0]], nodes[cell[1]], nodes[cell[2]]];
                let twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let inv = 1.0 / twice_area;
                cell_volume.push(0.5 * twice_area.abs());
                basis_grads.push([
                    [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
                    [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
                    [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
                ]);
            }
        }
        let mut free_index = vec![Some(0); nodes.len()];
        for &b in &boundary_nodes {
            free_index[b] = None;
        }
        let mut free_nodes = Vec::new();
        for (node, slot) in free_index.iter_mut().enumerate() {
            if slot.is_some() {
                *slot = Some(free_nodes.len());
                free_nodes.push(node);
            }
        }
        Mesh {
            dim,
            extent,
            resolution,
            nodes,
            cells,
            boundary_nodes,
            cell_volume,
            basis_grads,
            free_index,
            free_nodes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Side lengths of the domain (the second entry is 0 in 1D).
    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    /// Subdivisions per axis (the second entry is 0 in 1D).
    pub fn resolution(&self) -> [usize; 2] {
        self.resolution
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Node coordinates, `dim` entries long.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    /// Node indices of a cell: two for a segment, three for a triangle.
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.dim + 1]
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.cell_volume[c]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.cell_volume
    }

    /// Gradients of the local nodal basis functions on cell `c`.
    pub fn basis_gradients(&self, c: usize) -> &[[f64; 2]] {
        &self.basis_grads[c][..self.dim + 1]
    }

    /// Barycenter of a cell.
    pub fn centroid(&self, c: usize) -> [f64; 2] {
        let nodes = self.cell_nodes(c);
        let k = nodes.len() as f64;
        let mut m = [0.0; 2];
        for &n in nodes {
            m[0] += self.nodes[n][0];
            m[1] += self.nodes[n][1];
        }
        [m[0] / k, m[1] / k]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.free_index[node].is_none()
    }

    /// Interior nodes in ascending order; these are the unknowns of every
    /// Dirichlet problem on the mesh.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        match self.dim {
            1 => self.extent[0],
            _ => self.extent[0] * self.extent[1],
        }
    }

    /// Characteristic mesh size `(|Ω| / n_cells)^(1/dim)`.
    pub fn mesh_size(&self) -> f64 {
        match self.dim {
            1 => self.extent[0] / self.resolution[0] as f64,
            _ => (self.extent[0] / self.resolution[0] as f64)
                .max(self.extent[1] / self.resolution[1] as f64),
        }
    }

    /// Half bandwidth of any matrix assembled over free-node pairs.
    pub fn free_bandwidth(&self) -> usize {
        let mut bw = 0;
        for c in 0..self.n_cells() {
            let free: Vec<usize> = self
                .cell_nodes(c)
                .iter()
                .filter_map(|&n| self.free_index[n])
                .collect();
            for &i in &free {
                for &j in &free {
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        bw
    }
}

/// Nodal values of a continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::InvalidField(format!(
                "expected {} nodal values, got {}",
                mesh.n_nodes(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {i}")));
        }
        Ok(ScalarField {
            mesh: Arc::clone(mesh),
            values,
        })
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        ScalarField {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.n_nodes()],
        }
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        ScalarField {
            mesh: Arc::clone(mesh),
            values: vec![c; mesh.n_nodes()],
        }
    }

    /// Nodal interpolant of `f`; the closure receives `dim` coordinates.
    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..mesh.n_nodes()).map(|i| f(mesh.node(i))).collect();
        ScalarField::new(mesh, values)
    }

    pub(crate) fn from_raw(mesh: &Arc<Mesh>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), mesh.n_nodes());
        ScalarField {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at the barycenter of cell `c`.
    pub fn cell_mean(&self, c: usize) -> f64 {
        let nodes = self.mesh.cell_nodes(c);
        nodes.iter().map(|&n| self.values[n]).sum::<f64>() / nodes.len() as f64
    }

    /// `α·self + β·other`.
    pub fn combine(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<ScalarField> {
        same_mesh(&self.mesh, &other.mesh)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        ScalarField::new(&self.mesh, values)
    }

    pub fn scale(&self, alpha: f64) -> ScalarField {
        ScalarField::from_raw(&self.mesh, self.values.iter().map(|v| alpha * v).collect())
    }

    /// Copy of `self` with the boundary nodes overwritten by `boundary`,
    /// given in the order of [`Mesh::boundary_nodes`].
    pub fn with_boundary(&self, boundary: &[f64]) -> Result<ScalarField> {
        let nodes = self.mesh.boundary_nodes();
        if boundary.len() != nodes.len() {
            return Err(Error::InvalidField(format!(
                "expected {} boundary values, got {}",
                nodes.len(),
                boundary.len()
            )));
        }
        let mut values = self.values.clone();
        for (&n, &h) in nodes.iter().zip(boundary) {
            values[n] = h;
        }
        ScalarField::new(&self.mesh, values)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        same_mesh(&self.mesh, &other.mesh)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// One constant vector per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    mesh: Arc<Mesh>,
    vectors: Vec<[f64; 2]>,
}

impl VectorField {
    /// Builds a field from per-cell component slices of length `dim`.
    pub fn new(mesh: &Arc<Mesh>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.len() != mesh.n_cells() {
            return Err(Error::InvalidField(format!(
                "expected {} cell vectors, got {}",
                mesh.n_cells(),
                vectors.len()
            )));
        }
        let dim = mesh.dim();
        let mut out = Vec::with_capacity(vectors.len());
        for (c, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidField(format!(
                    "cell {c}: expected {dim} components"
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidField(format!(
                    "cell {c}: non-finite component"
                )));
            }
            out.push([v[0], if dim == 2 { v[1] } else { 0.0 }]);
        }
        Ok(VectorField {
            mesh: Arc::clone(mesh),
            vectors: out,
        })
    }

    pub(crate) fn from_raw(mesh: &Arc<Mesh>, vectors: Vec<[f64; 2]>) -> Self {
        debug_assert_eq!(vectors.len(), mesh.n_cells());
        VectorField {
            mesh: Arc::clone(mesh),
            vectors,
        }
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        VectorField::from_raw(mesh, vec![[0.0; 2]; mesh.n_cells()])
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Components of the vector on cell `c`.
    pub fn get(&self, c: usize) -> &[f64] {
        &self.vectors[c][..self.mesh.dim()]
    }

    pub(crate) fn raw(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    /// Euclidean magnitude on cell `c`.
    pub fn magnitude(&self, c: usize) -> f64 {
        let [x, y] = self.vectors[c];
        x.hypot(y)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.vectors.len()).map(|c| self.magnitude(c)).collect()
    }

    /// Largest cell magnitude.
    pub fn sup_norm(&self) -> f64 {
        (0..self.vectors.len())
            .map(|c| self.magnitude(c))
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, alpha: f64) -> VectorField {
        VectorField::from_raw(
            &self.mesh,
            self.vectors
                .iter()
                .map(|[x, y]| [alpha * x, alpha * y])
                .collect(),
        )
    }

    pub fn combine(&self, alpha: f64, other: &VectorField, beta: f64) -> Result<VectorField> {
        same_mesh(&self.mesh, &other.mesh)?;
        Ok(VectorField::from_raw(
            &self.mesh,
            self.vectors
                .iter()
                .zip(&other.vectors)
                .map(|(a, b)| [alpha * a[0] + beta * b[0], alpha * a[1] + beta * b[1]])
                .collect(),
        ))
    }

    /// Largest cell magnitude of `self − other`.
    pub fn max_diff(&self, other: &VectorField) -> Result<f64> {
        Ok(self.combine(1.0, other, -1.0)?.sup_norm())
    }
}

pub(crate) fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

/// Cell-wise gradient of a nodal field on a given mesh.
pub(crate) fn cell_gradient(mesh: &Mesh, values: &[f64], c: usize) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (&n, dphi) in mesh.cell_nodes(c).iter().zip(mesh.basis_gradients(c)) {
        g[0] += values[n] * dphi[0];
        g[1] += values[n] * dphi[1];
    }
    g
}

/// Exact gradient of the piecewise-linear interpolant, one vector per cell.
pub fn gradient(u: &ScalarField) -> VectorField {
    let mesh = u.mesh();
    let vectors = (0..mesh.n_cells())
        .map(|c| cell_gradient(mesh, u.values(), c))
        .collect();
    VectorField::from_raw(mesh, vectors)
}

/// Restriction of nodal values to the boundary, in ascending node order.
pub fn trace(u: &ScalarField) -> Vec<(usize, f64)> {
    u.mesh()
        .boundary_nodes()
        .iter()
        .map(|&n| (n, u.values()[n]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_four_cells() {
        let m = Mesh::interval(4, 1.0).unwrap();
        assert_eq!(m.n_nodes(), 5);
        let xs: Vec<f64> = (0..5).map(|i| m.node(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(m.volumes().iter().all(|&v| v == 0.25));
        assert_eq!(m.boundary_nodes(), &[0, 4]);
    }

    #[test]
    fn interval_single_cell() {
        let m = Mesh::interval(1, 2.0).unwrap();
        assert_eq!(m.n_nodes(), 2);
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.cell_volume(0), 2.0);
        assert!(m.free_nodes().is_empty());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Mesh::interval(0, 1.0).is_err());
        assert!(Mesh::interval(3, 0.0).is_err());
        assert!(Mesh::interval(3, -1.0).is_err());
        assert!(Mesh::rectangle(0, 2, 1.0, 1.0).is_err());
        assert!(Mesh::rectangle(2, 2, 1.0, 0.0).is_err());
    }

    #[test]
    fn unit_square_single_split() {
        let m = Mesh::rectangle(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.n_cells(), 2);
        assert!(m.volumes().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rectangle_partitions_domain() {
        let m = Mesh::rectangle(8, 8, 1.0, 1.0).unwrap();
        assert_eq!(m.n_cells(), 128);
        let total: f64 = m.volumes().iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        let m = Mesh::rectangle(5, 3, 2.5, 0.7).unwrap();
        let total: f64 = m.volumes().iter().sum();
        assert_relative_eq!(total, 2.5 * 0.7, max_relative = 1e-12);
        assert!(m.volumes().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn thin_rectangle_is_all_boundary() {
        let m = Mesh::rectangle(2, 1, 2.0, 1.0).unwrap();
        assert_eq!(m.boundary_nodes().len(), 6);
        assert!(m.free_nodes().is_empty());
    }

    #[test]
    fn boundary_nodes_lie_on_edges() {
        let m = Mesh::rectangle(4, 3, 1.0, 2.0).unwrap();
        for n in 0..m.n_nodes() {
            let x = m.node(n);
            let on_edge = x[0] == 0.0 || x[0] == 1.0 || x[1] == 0.0 || x[1] == 2.0;
            assert_eq!(on_edge, m.is_boundary(n), "node {n}");
        }
    }

    #[test]
    fn gradient_of_linear_fields() {
        let m = Mesh::interval(7, 1.0).unwrap();
        let u = ScalarField::from_fn(&m, |x| 3.0 * x[0]).unwrap();
        let g = gradient(&u);
        for c in 0..m.n_cells() {
            assert_relative_eq!(g.get(c)[0], 3.0, max_relative = 1e-12);
        }

        let m = Mesh::rectangle(4, 5, 1.0, 1.0).unwrap();
        let u = ScalarField::from_fn(&m, |x| x[0]).unwrap();
        let g = gradient(&u);
        for c in 0..m.n_cells() {
            assert!((g.get(c)[0] - 1.0).abs() < 1e-12);
            assert!(g.get(c)[1].abs() < 1e-12);
        }

        let g = gradient(&ScalarField::constant(&m, 4.2));
        assert!(g.sup_norm() < 1e-12);
    }

    #[test]
    fn trace_examples() {
        let m = Mesh::interval(6, 1.0).unwrap();
        let u = ScalarField::from_fn(&m, |x| x[0]).unwrap();
        assert_eq!(trace(&u), vec![(0, 0.0), (6, 1.0)]);

        let m = Mesh::rectangle(3, 3, 1.0, 1.0).unwrap();
        assert!(trace(&ScalarField::constant(&m, 5.0))
            .iter()
            .all(|&(_, v)| v == 5.0));
        let u = ScalarField::from_fn(&m, |x| x[0]).unwrap();
        for (n, v) in trace(&u) {
            assert_eq!(v, m.node(n)[0]);
        }
    }

    #[test]
    fn field_validation() {
        let m = Mesh::interval(2, 1.0).unwrap();
        assert!(ScalarField::new(&m, vec![0.0; 2]).is_err());
        assert!(ScalarField::new(&m, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(VectorField::new(&m, vec![vec![1.0]; 3]).is_err());
        assert!(VectorField::new(&m, vec![vec![1.0, 2.0]; 2]).is_err());
        assert!(VectorField::new(&m, vec![vec![f64::INFINITY], vec![0.0]]).is_err());
    }

    #[test]
    fn mismatched_meshes_are_rejected() {
        let a = Mesh::interval(2, 1.0).unwrap();
        let b = Mesh::interval(3, 1.0).unwrap();
        let u = ScalarField::zeros(&a);
        let v = ScalarField::zeros(&b);
        assert!(matches!(u.combine(1.0, &v, 1.0), Err(Error::MeshMismatch)));
    }

    #[test]
    fn bandwidth_of_grid() {
        let m = Mesh::rectangle(6, 4, 1.0, 1.0).unwrap();
        // interior rows hold nx − 1 = 5 unknowns; the diagonal neighbour is one row plus one over
        assert_eq!(m.free_bandwidth(), 6);
        assert_eq!(Mesh::interval(10, 1.0).unwrap().free_bandwidth(), 1);
    }
}
