fn main() {
    use kstab::grid::Grid;
    use kstab::potentials::*;
    let p1 = kstab::polytope::interval(0.0, 1.0).unwrap();
    let grid = Grid::line(-22.0, 22.0, 2049).unwrap();
    let pot = catalog_reference(ReferenceKind::FubiniStudy, &p1, &grid).unwrap();
    let gen = pot.generator.as_ref().unwrap();
    for idx in [2041usize, 2042, 2043, 2044, 2045] {
        let x = grid.node_flat(idx);
        let det = gen.ma_det_at(&x);
        let y = 1.0/(1.0+(-x[0]).exp());
        let exact = y*(1.0-y);
        println!("x {:.4}  det {:.6e}  exact {:.6e}  rel {:.2e}", x[0], det, exact, (det-exact).abs()/exact);
    }
}
