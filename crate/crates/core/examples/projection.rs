//! Distance from a point to a convex hull, with the optimality certificate,
//! and the feature direction it induces for a classifier.

use softmax_codes::closed_forms::uniform_circle;
use softmax_codes::geometry::{
    min_norm_projection, one_vs_rest_distance, optimal_feature_direction, worst_margin,
};

fn main() {
    let hull = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
    let query = [0.0, 0.0, 0.0];
    let r = min_norm_projection(&query, &hull).unwrap();
    println!("projection  {:?}", r.projection);
    println!("weights     {:?}", r.weights);
    println!("distance    {:.12} (expected {:.12})", r.distance, 2.0 / 3f64.sqrt());
    println!("certificate {:.3e}", r.certificate(&query, &hull));

    let w = uniform_circle(5, 0.0).unwrap();
    let h = optimal_feature_direction(&w, 0).unwrap();
    println!();
    println!("circle K=5, class 0");
    println!("direction    {:?}", h.as_slice());
    println!("worst margin {:.12}", worst_margin(&w, 0, h.as_slice()));
    println!("distance     {:.12}", one_vs_rest_distance(&w, 0).unwrap());
}
