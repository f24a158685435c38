//! Reaction enthalpy, bond atomization, holdings entropy, and game classification.
use dan_core::address::Address;
use dan_core::econ::{
    classify_game, enthalpy_of_atomization, enthalpy_of_reaction, entropy, gini, CommunityBond, HoldingsDistribution,
    SpeciesTerm, ZERO_SUM_EPSILON,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reactants = [SpeciesTerm::new(2.0, 1.0)?];
    let products = [SpeciesTerm::new(1.0, 12.0)?];
    println!("dH_r = {}", enthalpy_of_reaction(&products, &reactants));

    let bonds: Vec<CommunityBond> = (0..3)
        .map(|i| CommunityBond::new(Address::derive("a", i), Address::derive("b", i), 4.0 + i as f64))
        .collect::<Result<_, _>>()?;
    println!("atomization = {}", enthalpy_of_atomization(&bonds));

    for holdings in [vec![100, 0, 0, 0], vec![50, 50, 0, 0], vec![25, 25, 25, 25]] {
        let s = entropy(&HoldingsDistribution::from_amounts(&holdings)?);
        println!("{holdings:?}: entropy {s:.4}, gini {:.3}", gini(&holdings));
    }

    for payoffs in [vec![5.0, -5.0, 2.0, -2.0], vec![5.0, 1.0, 0.5], vec![-3.0, 1.0]] {
        let class = classify_game(&payoffs, ZERO_SUM_EPSILON);
        println!("{payoffs:?}: {} (ponzi suspect: {})", class.as_str(), class.ponzi_suspect());
    }
    Ok(())
}
