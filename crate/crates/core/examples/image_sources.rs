//! Image sources of one defect in a two-layer stack.
//!
//! `cargo run --example image_sources`

use echolabel::geometry::{generate_image_sources, Defect, LayerStack, Point2D};

fn main() {
    let layers = LayerStack::new(vec![-0.004, -0.008]).expect("descending boundaries");
    let defect = Defect::new("a", Point2D::new(0.001, -0.002));
    println!(
        "defect {} at ({:.4}, {:.4})",
        defect.id, defect.position.x, defect.position.y
    );
    for order in 1..=3 {
        let images = generate_image_sources(&defect, &layers, order);
        println!("mirror order {order}: {} images", images.len());
        for img in images {
            println!(
                "  lineage {:?} -> ({:.4}, {:.4})",
                img.lineage, img.position.x, img.position.y
            );
        }
    }
}
