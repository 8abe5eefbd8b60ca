//! Irreducible representations, characters and Haar quadrature on SO(2) and C_8.
use equimaps::group::{self, Group, GroupElement, IrrepIndex, OrbitGrid};
use num_complex::Complex64 as C64;

fn main() -> equimaps::Result<()> {
    let g = GroupElement::so2(0.7);
    let h = GroupElement::so2(2.1);
    let gh = group::compose(&g, &h)?;
    let rho = IrrepIndex::new(Group::So2, 3)?;
    let lhs = group::iur_eval(&rho, &gh)?[(0, 0)];
    let rhs = group::iur_eval(&rho, &g)?[(0, 0)] * group::iur_eval(&rho, &h)?[(0, 0)];
    println!("homomorphism defect at l=3: {:.2e}", (lhs - rhs).norm());

    // Orthogonality of characters under the uniform grid rule.
    let grid = OrbitGrid::cyclic(8)?;
    let q = grid.quadrature();
    let c8 = Group::Cyclic { order: 8 };
    for (a, b) in [(1, 1), (1, 2), (3, -5)] {
        let ra = IrrepIndex::new(c8, a)?;
        let rb = IrrepIndex::new(c8, b)?;
        let v = q.integrate(|x| {
            let ca: C64 = c8.character(&ra, x).unwrap();
            ca * c8.character(&rb, x).unwrap().conj()
        });
        println!("<chi_{a}, chi_{b}> on C_8 = {:.3}", v);
    }
    println!("C_8 grid: max frequency {}, multiplicity of l=4 is {}", grid.max_frequency(), grid.multiplicity(4));
    Ok(())
}
