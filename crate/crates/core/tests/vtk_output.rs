//! VTK files are read back with an independent parser.

use std::sync::Arc;

use bernstein_vi::experiments::write_vtk;
use bernstein_vi::mesh::{build_mesh, DomainKind, DomainSpec};
use bernstein_vi::space::FunctionSpace;
use vtkio::model::{Attribute, CellType, DataSet, Piece};
use vtkio::Vtk;

fn read_back(path: &std::path::Path) -> vtkio::model::UnstructuredGridPiece {
    let vtk = Vtk::import(path).expect("valid legacy file");
    match vtk.data {
        DataSet::UnstructuredGrid { pieces, .. } => match pieces.into_iter().next() {
            Some(Piece::Inline(p)) => *p,
            _ => panic!("expected one inline piece"),
        },
        _ => panic!("expected an unstructured grid"),
    }
}

#[test]
fn point_data_matches_the_functions() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, k) in [(DomainKind::UnitSquare, 1), (DomainKind::SquareWithHole, 2), (DomainKind::CenteredSquare, 3)] {
        let mesh = Arc::new(build_mesh(DomainSpec::new(kind, 9)).unwrap());
        let space = FunctionSpace::new(mesh.clone(), k).unwrap();
        let u = space.interpolate(|[x, y]| (2.0 * x).cos() + x * y * y);
        let v = space.interpolate(|[x, y]| x - 3.0 * y);
        let path = dir.path().join(format!("k{k}.vtk"));
        write_vtk(&[("u", &u), ("v", &v)], &path).unwrap();

        let piece = read_back(&path);
        let points: Vec<f64> = piece.points.cast_into().unwrap();
        assert_eq!(points.len() % 3, 0);
        let npts = points.len() / 3;
        // Each cell is split into k^2 triangles.
        assert_eq!(piece.cells.num_cells(), mesh.num_cells() * k * k);
        assert!(piece.cells.types.iter().all(|t| *t == CellType::Triangle));
        let (_, verts) = piece.cells.cell_verts.clone().into_legacy();
        assert!(verts.chunks(4).all(|c| c[0] == 3 && c[1..].iter().all(|&i| (i as usize) < npts)));

        let mut names = Vec::new();
        for attr in &piece.data.point {
            let Attribute::DataArray(arr) = attr else { panic!("unexpected attribute") };
            names.push(arr.name.clone());
            let f = if arr.name == "u" { &u } else { &v };
            let vals: Vec<f64> = arr.data.clone().cast_into().unwrap();
            assert_eq!(vals.len(), npts);
            for (i, val) in vals.iter().enumerate() {
                let p = [points[3 * i], points[3 * i + 1]];
                let expected = f.evaluate(p).unwrap();
                assert!((val - expected).abs() < 1e-12, "{} at {p:?}: {val} vs {expected}", arr.name);
            }
        }
        assert_eq!(names, ["u", "v"]);
    }
}

#[test]
fn fields_must_share_a_mesh() {
    let m1 = Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, 2)).unwrap());
    let m2 = Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, 2)).unwrap());
    let a = FunctionSpace::new(m1.clone(), 1).unwrap().zero_function();
    let b = FunctionSpace::new(m2, 1).unwrap().zero_function();
    let dir = tempfile::tempdir().unwrap();
    assert!(write_vtk(&[("a", &a), ("b", &b)], dir.path().join("x.vtk")).is_err());
    assert!(write_vtk(&[], dir.path().join("y.vtk")).is_err());

    // Mixed degrees on one mesh are sampled on the finer lattice.
    let c = FunctionSpace::new(m1, 3).unwrap().interpolate(|[x, y]| x * x * y);
    let path = dir.path().join("z.vtk");
    write_vtk(&[("a", &a), ("c", &c)], &path).unwrap();
    assert_eq!(read_back(&path).cells.num_cells(), 8 * 9);
}
