fn main() {
    println!("robhaz");
}
