fn main() {
    println!("rdg");
}
