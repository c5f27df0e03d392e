pub mod corpus;
pub mod linalg;
pub mod oracle;
