//! Bounded, first-come-first-served admission for in-flight requests.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

struct State {
    in_flight: usize,
    peak: usize,
    next_ticket: u64,
    waiting: VecDeque<u64>,
}

pub struct FifoSemaphore {
    capacity: usize,
    state: Mutex<State>,
    cv: Condvar,
}

/// Held while a request is in flight; released on drop, including unwinds.
pub struct Permit<'a> {
    sem: &'a FifoSemaphore,
}

impl FifoSemaphore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            state: Mutex::new(State {
                in_flight: 0,
                peak: 0,
                next_ticket: 0,
                waiting: VecDeque::new(),
            }),
            cv: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Highest concurrent permit count seen so far.
    pub fn peak(&self) -> usize {
        self.state.lock().expect("pool lock").peak
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("pool lock");
        let ticket = st.next_ticket;
        st.next_ticket += 1;
        st.waiting.push_back(ticket);
        while !(st.waiting.front() == Some(&ticket) && st.in_flight < self.capacity) {
            st = self.cv.wait(st).expect("pool lock");
        }
        st.waiting.pop_front();
        st.in_flight += 1;
        st.peak = st.peak.max(st.in_flight);
        drop(st);
        self.cv.notify_all();
        Permit { sem: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.sem.state.lock().unwrap_or_else(|e| e.into_inner());
        st.in_flight -= 1;
        drop(st);
        self.sem.cv.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn never_exceeds_capacity() {
        let sem = Arc::new(FifoSemaphore::new(3));
        let live = Arc::new(AtomicUsize::new(0));
        let max = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..12)
            .map(|_| {
                let (sem, live, max) = (sem.clone(), live.clone(), max.clone());
                std::thread::spawn(move || {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    max.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(max.load(Ordering::SeqCst) <= 3);
        assert_eq!(sem.peak(), max.load(Ordering::SeqCst));
    }

    #[test]
    fn permits_released_on_panic() {
        let sem = Arc::new(FifoSemaphore::new(1));
        let s = sem.clone();
        let _ = std::thread::spawn(move || {
            let _p = s.acquire();
            panic!("boom");
        })
        .join();
        let _p = sem.acquire();
    }

    #[test]
    fn admission_is_fifo() {
        let sem = Arc::new(FifoSemaphore::new(1));
        let order = Arc::new(Mutex::new(Vec::new()));
        let gate = sem.acquire();
        let mut handles = Vec::new();
        for i in 0..5 {
            let (s, order) = (sem.clone(), order.clone());
            handles.push(std::thread::spawn(move || {
                let _p = s.acquire();
                order.lock().unwrap().push(i);
            }));
            // let thread i enqueue before i+1
            while sem.state.lock().unwrap().waiting.len() < i + 1 {
                std::thread::yield_now();
            }
        }
        drop(gate);
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(*order.lock().unwrap(), vec![0, 1, 2, 3, 4]);
    }
}
