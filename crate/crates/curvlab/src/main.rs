fn main() {
    println!("curvlab");
}
