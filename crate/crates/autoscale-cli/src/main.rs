fn main() {
    println!("autoscale");
}
