use yule_wasm_demo::{branch_coords, fe_grid, tree_coords, MAX_SEGMENTS};

#[test]
fn tree_layout() {
    let v = tree_coords(2.0, 1.0, 7).unwrap();
    assert!(v[0] > 0.0 && v[0] <= 1.0 + 1e-12);
    assert_eq!((v.len() - 2) % 4, 0);
    assert_eq!(&v[2..4], &[0.0, 0.0]);
    assert_eq!(v, tree_coords(2.0, 1.0, 7).unwrap());
}

#[test]
fn oversized_tree_is_an_error() {
    let err = tree_coords(20.0, 1.0, 1).unwrap_err();
    assert!(err.contains(&MAX_SEGMENTS.to_string()), "{err}");
}

#[test]
fn branch_starts_at_origin() {
    let v = branch_coords(5.0, 1.0, 3).unwrap();
    assert_eq!(&v[..2], &[0.0, 0.0]);
    let end = (v[v.len() - 2].powi(2) + v[v.len() - 1].powi(2)).sqrt();
    assert!(end <= 1.0 + 1e-12);
}

#[test]
fn fe_grid_layout() {
    let v = fe_grid(1.0, 0.3, 1.0, 0.05).unwrap();
    let (nt, nd) = (v[0] as usize, v[1] as usize);
    assert_eq!(v.len(), 3 + (nt + 1) * (nd + 1));
    assert!(v[3..].iter().all(|q| (0.0..=1.0).contains(q)));
    assert!(fe_grid(1.0, 0.33, 1.0, 0.05).is_err());
}
