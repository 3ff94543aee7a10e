# ClassroomPeers Simulation Harness
