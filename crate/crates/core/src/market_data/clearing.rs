use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub price: f64,
    pub quantity: f64,
}

impl Bid {
    pub fn new(price: f64, quantity: f64) -> Self {
        Self { price, quantity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clearing {
    pub wavg_price: f64,
    /// Accepted quantity per bid, in the caller's input order.
    pub accepted: Vec<f64>,
    /// Price of the last (marginal) accepted bid.
    pub marginal_price: f64,
}

/// Clears a pay-as-bid auction.
///
/// Bids are stacked by ascending price (ties keep input order) and accepted
/// until demand is met, the marginal bid partially. Each accepted MWh is
/// paid its own bid, so the reported price is the quantity-weighted mean of
/// the accepted bids.
pub fn clear_pay_as_bid(bids: &[Bid], demand: f64) -> Result<Clearing> {
    if !(demand.is_finite() && demand > 0.0) {
        return Err(Error::InvalidInput(format!("demand must be > 0, got {demand}")));
    }
    for b in bids {
        if !(b.quantity.is_finite() && b.quantity > 0.0) || !(b.price.is_finite() && b.price >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "bid ({}, {}) needs quantity > 0 and price >= 0",
                b.price, b.quantity
            )));
        }
    }
    let offered: f64 = bids.iter().map(|b| b.quantity).sum();
    if offered < demand {
        return Err(Error::Shortage { deficit: demand - offered });
    }

    let mut order: Vec<usize> = (0..bids.len()).collect();
    // Stable sort keeps input order among equal prices.
    order.sort_by(|&a, &b| bids[a].price.total_cmp(&bids[b].price));

    let mut accepted = vec![0.0; bids.len()];
    let mut remaining = demand;
    let mut cost = 0.0;
    let mut marginal_price = 0.0;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = bids[i].quantity.min(remaining);
        accepted[i] = take;
        cost += take * bids[i].price;
        marginal_price = bids[i].price;
        remaining -= take;
    }
    Ok(Clearing { wavg_price: cost / demand, accepted, marginal_price })
}
